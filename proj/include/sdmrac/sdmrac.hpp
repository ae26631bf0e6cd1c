#ifndef SDMRAC_SDMRAC_HPP
#define SDMRAC_SDMRAC_HPP

// Everything except YAML config files (config_io.hpp, needs yaml-cpp).

#include "sdmrac/adapt.hpp"
#include "sdmrac/bnn.hpp"
#include "sdmrac/buffer.hpp"
#include "sdmrac/config.hpp"
#include "sdmrac/csv.hpp"
#include "sdmrac/dynamics.hpp"
#include "sdmrac/harness.hpp"
#include "sdmrac/plot.hpp"

#endif  // SDMRAC_SDMRAC_HPP
