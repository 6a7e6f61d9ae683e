#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "lcz/common.hpp"

namespace lcz {

/// Number of classes in the LCZ scheme: built types 1-10, natural types A-G.
inline constexpr int kNumClasses = 17;

/// One of the 17 LCZ classes, stored as a canonical code 0-16.
/// Codes 0-9 are the built classes LCZ1-LCZ10, codes 10-16 the natural
/// classes LCZA-LCZG.
class LczClass {
public:
    LczClass() = default;

    static LczClass from_code(int code) {
        require(code >= 0 && code < kNumClasses, ErrorKind::invalid_argument,
                "LCZ class code out of range: " + std::to_string(code));
        return LczClass(static_cast<std::int8_t>(code));
    }

    /// Parses the short string form used in points CSVs: "1".."10" or "A".."G".
    static LczClass parse(std::string_view text) {
        for (int code = 0; code < kNumClasses; ++code)
            if (text == short_name_of(code)) return LczClass(static_cast<std::int8_t>(code));
        fail(ErrorKind::invalid_argument, "not an LCZ class: \"" + std::string(text) + "\"");
    }

    int code() const { return code_; }

    /// "LCZ1".."LCZ10", "LCZA".."LCZG".
    std::string name() const { return "LCZ" + std::string(short_name()); }

    /// "1".."10", "A".."G" (round-trips through parse()).
    std::string_view short_name() const { return short_name_of(code_); }

    bool is_built() const { return code_ < 10; }
    bool is_natural() const { return code_ >= 10; }

    friend bool operator==(LczClass a, LczClass b) { return a.code_ == b.code_; }
    friend bool operator!=(LczClass a, LczClass b) { return a.code_ != b.code_; }
    friend bool operator<(LczClass a, LczClass b) { return a.code_ < b.code_; }

private:
    explicit LczClass(std::int8_t code) : code_(code) {}

    static std::string_view short_name_of(int code) {
        static constexpr std::array<std::string_view, kNumClasses> names = {
            "1", "2", "3", "4", "5", "6", "7", "8", "9", "10",
            "A", "B", "C", "D", "E", "F", "G"};
        return names[static_cast<std::size_t>(code)];
    }

    std::int8_t code_ = 0;
};

} // namespace lcz
