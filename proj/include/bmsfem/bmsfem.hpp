#pragma once

#include "bmsfem/basis_cache.hpp"
#include "bmsfem/bayes.hpp"
#include "bmsfem/coeff.hpp"
#include "bmsfem/config.hpp"
#include "bmsfem/diagnostics.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/gmsfem.hpp"
#include "bmsfem/march.hpp"
#include "bmsfem/mesh.hpp"
#include "bmsfem/model.hpp"
#include "bmsfem/parallel.hpp"
#include "bmsfem/residual.hpp"
#include "bmsfem/rng.hpp"
#include "bmsfem/sampler.hpp"
