#pragma once

#include "dfsdca/dataset.hpp"
#include "dfsdca/losses.hpp"
#include "dfsdca/sampling.hpp"
#include "dfsdca/solver.hpp"
#include "dfsdca/diagnostics.hpp"
#include "dfsdca/validation.hpp"
#include "dfsdca/io.hpp"
