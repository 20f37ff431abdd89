#pragma once

#include "pcgroup/errors.hpp"
#include "pcgroup/design.hpp"
#include "pcgroup/numeric.hpp"
#include "pcgroup/corr.hpp"
#include "pcgroup/gaussian.hpp"
#include "pcgroup/pcprior.hpp"
#include "pcgroup/gumbel.hpp"
#include "pcgroup/dataset.hpp"
#include "pcgroup/inference.hpp"
#include "pcgroup/simulate.hpp"
#include "pcgroup/io.hpp"
