#pragma once

#include "conclab/error.hpp"
#include "conclab/halfspace.hpp"
#include "conclab/lab.hpp"
#include "conclab/measure.hpp"
#include "conclab/parallel.hpp"
#include "conclab/position.hpp"
#include "conclab/report.hpp"
#include "conclab/rng.hpp"
#include "conclab/sphere_kernel.hpp"
#include "conclab/spherical_calculus.hpp"
