#pragma once

#include "zerosight/ops_conv.hpp"
#include "zerosight/ops_elementwise.hpp"
#include "zerosight/ops_linear.hpp"
#include "zerosight/ops_norm.hpp"
#include "zerosight/ops_pool.hpp"
#include "zerosight/ops_reduce.hpp"
