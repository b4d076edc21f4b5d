#pragma once

#include "fr/core.hpp"
#include "fr/calculus.hpp"
#include "fr/random.hpp"
#include "fr/certificate.hpp"
#include "fr/covering.hpp"
#include "fr/sampling.hpp"
#include "fr/regularity.hpp"
#include "fr/distal.hpp"
#include "fr/io.hpp"
