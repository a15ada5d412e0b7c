#pragma once

#include "hairmatte/autodiff.hpp"
#include "hairmatte/checkpoint.hpp"
#include "hairmatte/conv.hpp"
#include "hairmatte/dataset.hpp"
#include "hairmatte/errors.hpp"
#include "hairmatte/eval.hpp"
#include "hairmatte/guided_filter.hpp"
#include "hairmatte/image.hpp"
#include "hairmatte/loss.hpp"
#include "hairmatte/metrics.hpp"
#include "hairmatte/model.hpp"
#include "hairmatte/ops.hpp"
#include "hairmatte/optim.hpp"
#include "hairmatte/recolor.hpp"
#include "hairmatte/rng.hpp"
#include "hairmatte/runconfig.hpp"
#include "hairmatte/tensor.hpp"
#include "hairmatte/train.hpp"
