// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "epic/autodiff.hpp"
#include "epic/backbone.hpp"
#include "epic/checkpoint.hpp"
#include "epic/config.hpp"
#include "epic/data.hpp"
#include "epic/grad_check.hpp"
#include "epic/interaction_hub.hpp"
#include "epic/model.hpp"
#include "epic/objective.hpp"
#include "epic/report.hpp"
#include "epic/tensor.hpp"
#include "epic/trainer.hpp"
