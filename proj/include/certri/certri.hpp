#pragma once

// Umbrella header for the certri library.

#include "certri/error.hpp"
#include "certri/geometry.hpp"
#include "certri/relaxations.hpp"
#include "certri/sdp.hpp"
#include "certri/certify.hpp"
#include "certri/rounding.hpp"
#include "certri/io.hpp"
#include "certri/harness.hpp"
