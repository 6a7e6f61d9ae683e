#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lcz/common.hpp"
#include "lcz/io.hpp"
#include "lcz/lcz_class.hpp"

namespace lcz {

/// 17x17 count matrix; rows index the reference (true) class, columns the
/// predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

    std::int64_t total() const {
        std::int64_t n = 0;
        for (const auto& row : counts)
            for (std::int64_t v : row) n += v;
        return n;
    }

    std::int64_t trace() const {
        std::int64_t n = 0;
        for (int i = 0; i < kNumClasses; ++i) n += counts[i][i];
        return n;
    }

    std::int64_t row_sum(int i) const {
        std::int64_t n = 0;
        for (std::int64_t v : counts[static_cast<std::size_t>(i)]) n += v;
        return n;
    }

    std::int64_t col_sum(int j) const {
        std::int64_t n = 0;
        for (int i = 0; i < kNumClasses; ++i) n += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return n;
    }
};

inline ConfusionMatrix confusion(const std::vector<LczClass>& preds,
                                 const std::vector<LczClass>& refs) {
    require(preds.size() == refs.size(), ErrorKind::dimension,
            "prediction/reference lists differ in length");
    require(!preds.empty(), ErrorKind::invalid_argument, "empty prediction list");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i)
        ++cm.counts[static_cast<std::size_t>(refs[i].code())][static_cast<std::size_t>(preds[i].code())];
    return cm;
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    require(n >= 1, ErrorKind::invalid_argument, "empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

/// Cohen's kappa (p_o - p_e) / (1 - p_e). Degenerate marginals (p_e == 1)
/// return 1 for perfect agreement and 0 otherwise.
inline double cohen_kappa(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    require(n >= 1, ErrorKind::invalid_argument, "empty confusion matrix");
    const double nd = static_cast<double>(n);
    const double p_o = static_cast<double>(cm.trace()) / nd;
    double p_e = 0.0;
    for (int i = 0; i < kNumClasses; ++i)
        p_e += (static_cast<double>(cm.row_sum(i)) / nd) * (static_cast<double>(cm.col_sum(i)) / nd);
    if (p_e == 1.0) return p_o == 1.0 ? 1.0 : 0.0;
    return (p_o - p_e) / (1.0 - p_e);
}

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;   // reference count
    std::int64_t predicted = 0; // prediction count
};

struct F1Report {
    std::array<ClassScore, kNumClasses> per_class{};
    double macro_f1 = 0.0; // mean over classes with support or predictions
};

/// Per-class precision/recall/F1 with the 0/0 -> 0 convention. Macro-F1
/// averages only classes present in the reference or the predictions.
inline F1Report f1_scores(const ConfusionMatrix& cm) {
    require(cm.total() >= 1, ErrorKind::invalid_argument, "empty confusion matrix");
    F1Report report;
    double macro_sum = 0.0;
    int macro_count = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        ClassScore& s = report.per_class[static_cast<std::size_t>(c)];
        const auto tp = static_cast<double>(cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]);
        s.support = cm.row_sum(c);
        s.predicted = cm.col_sum(c);
        const double fp = static_cast<double>(s.predicted) - tp;
        const double fn = static_cast<double>(s.support) - tp;
        s.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
        s.recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        if (s.support > 0 || s.predicted > 0) {
            macro_sum += s.f1;
            ++macro_count;
        }
    }
    report.macro_f1 = macro_count > 0 ? macro_sum / macro_count : 0.0;
    return report;
}

/// Everything the evaluation stage reports for one model/test-set pair.
struct MetricsReport {
    double overall_accuracy = 0.0;
    double kappa = 0.0;
    F1Report f1;
    ConfusionMatrix confusion;
};

inline MetricsReport compute_report(const std::vector<LczClass>& preds,
                                    const std::vector<LczClass>& refs) {
    MetricsReport report;
    report.confusion = confusion(preds, refs);
    report.overall_accuracy = overall_accuracy(report.confusion);
    report.kappa = cohen_kappa(report.confusion);
    report.f1 = f1_scores(report.confusion);
    return report;
}

inline json metrics_to_json(const MetricsReport& report) {
    json per_class = json::object();
    for (int c = 0; c < kNumClasses; ++c) {
        const ClassScore& s = report.f1.per_class[static_cast<std::size_t>(c)];
        per_class[LczClass::from_code(c).name()] = {{"precision", s.precision},
                                                    {"recall", s.recall},
                                                    {"f1", s.f1},
                                                    {"support", s.support}};
    }
    json confusion_rows = json::array();
    for (const auto& row : report.confusion.counts) {
        json r = json::array();
        for (std::int64_t v : row) r.push_back(v);
        confusion_rows.push_back(std::move(r));
    }
    return json{{"overall_accuracy", report.overall_accuracy},
                {"kappa", report.kappa},
                {"macro_f1", report.f1.macro_f1},
                {"per_class", per_class},
                {"confusion", confusion_rows}};
}

inline MetricsReport metrics_from_json(const json& j) {
    MetricsReport report;
    report.overall_accuracy = j.at("overall_accuracy").get<double>();
    report.kappa = j.at("kappa").get<double>();
    report.f1.macro_f1 = j.at("macro_f1").get<double>();
    for (int c = 0; c < kNumClasses; ++c) {
        const json& s = j.at("per_class").at(LczClass::from_code(c).name());
        auto& dst = report.f1.per_class[static_cast<std::size_t>(c)];
        dst.precision = s.at("precision").get<double>();
        dst.recall = s.at("recall").get<double>();
        dst.f1 = s.at("f1").get<double>();
        dst.support = s.at("support").get<std::int64_t>();
    }
    for (int i = 0; i < kNumClasses; ++i)
        for (int j2 = 0; j2 < kNumClasses; ++j2)
            report.confusion.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j2)] =
                j.at("confusion").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j2)).get<std::int64_t>();
    return report;
}

} // namespace lcz
