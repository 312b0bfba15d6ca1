#pragma once

#include "dpmts/error.hpp"
#include "dpmts/random.hpp"
#include "dpmts/tensor.hpp"
#include "dpmts/ops.hpp"
#include "dpmts/optim.hpp"
#include "dpmts/gradcheck.hpp"
#include "dpmts/text.hpp"
#include "dpmts/prompts.hpp"
#include "dpmts/series.hpp"
#include "dpmts/backbone.hpp"
#include "dpmts/data.hpp"
#include "dpmts/datagen.hpp"
#include "dpmts/model.hpp"
#include "dpmts/train.hpp"
#include "dpmts/config.hpp"
#include "dpmts/gradcheck_suite.hpp"
