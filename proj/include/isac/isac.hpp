// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/analysis.hpp"
#include "isac/angle_est.hpp"
#include "isac/channel.hpp"
#include "isac/csv.hpp"
#include "isac/fusion.hpp"
#include "isac/harness.hpp"
#include "isac/io.hpp"
#include "isac/pipeline.hpp"
#include "isac/preprocess.hpp"
#include "isac/rng.hpp"
#include "isac/scene.hpp"
