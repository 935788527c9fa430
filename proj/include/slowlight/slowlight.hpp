#pragma once

#include "band.hpp"
#include "dynamics.hpp"
#include "emission.hpp"
#include "platforms.hpp"
#include "spectral.hpp"
