#pragma once

#include "qkzb/elliptic_core.hpp"
#include "qkzb/hypergeometric.hpp"
#include "qkzb/qkzb_operators.hpp"
#include "qkzb/rmatrix.hpp"
#include "qkzb/weight_functions.hpp"
