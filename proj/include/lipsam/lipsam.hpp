#pragma once

#include "csv.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "fft.hpp"
#include "instance.hpp"
#include "lipschitz.hpp"
#include "modifier.hpp"
#include "network.hpp"
#include "network_io.hpp"
#include "pnp.hpp"
#include "power.hpp"
#include "signal.hpp"
#include "trainer.hpp"
#include "wav.hpp"
