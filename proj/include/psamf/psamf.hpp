// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "psamf/errors.hpp"
#include "psamf/autograd.hpp"
#include "psamf/nn.hpp"
#include "psamf/data_model.hpp"
#include "psamf/encoders.hpp"
#include "psamf/alignment.hpp"
#include "psamf/fusion.hpp"
#include "psamf/metrics.hpp"
#include "psamf/weights.hpp"
#include "psamf/run_config.hpp"
#include "psamf/experiments.hpp"
