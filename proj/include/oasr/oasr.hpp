#pragma once

#include "oasr/checkpoint.hpp"
#include "oasr/commands.hpp"
#include "oasr/config.hpp"
#include "oasr/data.hpp"
#include "oasr/graph.hpp"
#include "oasr/image.hpp"
#include "oasr/image_io.hpp"
#include "oasr/metrics.hpp"
#include "oasr/model.hpp"
#include "oasr/ops.hpp"
#include "oasr/optim.hpp"
#include "oasr/parameter.hpp"
#include "oasr/run_config.hpp"
#include "oasr/tensor.hpp"
#include "oasr/train.hpp"
