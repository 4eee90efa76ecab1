#pragma once

#include "canalrl/errors.hpp"
#include "canalrl/nn.hpp"
#include "canalrl/reward.hpp"
#include "canalrl/canal_env.hpp"
#include "canalrl/replay_buffer.hpp"
#include "canalrl/expert.hpp"
#include "canalrl/sac.hpp"
#include "canalrl/metrics.hpp"
#include "canalrl/config.hpp"
#include "canalrl/checkpoint.hpp"
#include "canalrl/evaluation.hpp"
