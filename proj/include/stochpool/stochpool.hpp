#pragma once

#include "stochpool/error.hpp"
#include "stochpool/masks.hpp"
#include "stochpool/moment_lab.hpp"
#include "stochpool/pooling.hpp"
#include "stochpool/rng.hpp"
#include "stochpool/tensor.hpp"
#include "stochpool/toy_net.hpp"
