#pragma once

#include "medboot/bootstrap.hpp"
#include "medboot/dataset.hpp"
#include "medboot/errors.hpp"
#include "medboot/estimator.hpp"
#include "medboot/imputer.hpp"
#include "medboot/math.hpp"
#include "medboot/parallel.hpp"
#include "medboot/report_io.hpp"
#include "medboot/rng.hpp"
#include "medboot/simlab.hpp"
