#pragma once

#include "lcz/adam.hpp"
#include "lcz/common.hpp"
#include "lcz/config.hpp"
#include "lcz/dataset.hpp"
#include "lcz/forest.hpp"
#include "lcz/gradcheck.hpp"
#include "lcz/io.hpp"
#include "lcz/layers.hpp"
#include "lcz/lcz_class.hpp"
#include "lcz/mapping.hpp"
#include "lcz/metrics.hpp"
#include "lcz/model_io.hpp"
#include "lcz/mscnn.hpp"
#include "lcz/raster.hpp"
#include "lcz/rng.hpp"
#include "lcz/rules.hpp"
#include "lcz/synth.hpp"
#include "lcz/tensor.hpp"
#include "lcz/train.hpp"
#include "lcz/transfer.hpp"
