#pragma once

#include "certiprop/errors.hpp"
#include "certiprop/rounding.hpp"
#include "certiprop/interval.hpp"
#include "certiprop/linalg.hpp"
#include "certiprop/network.hpp"
#include "certiprop/report.hpp"
#include "certiprop/random.hpp"
#include "certiprop/parallel.hpp"
#include "certiprop/softmax_bounds.hpp"
#include "certiprop/ibp.hpp"
#include "certiprop/affine.hpp"
#include "certiprop/doubleton.hpp"
#include "certiprop/oracle.hpp"
#include "certiprop/experiments.hpp"
