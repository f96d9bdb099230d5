#pragma once

#include "wpp/adam.hpp"
#include "wpp/config.hpp"
#include "wpp/error.hpp"
#include "wpp/exact_transport.hpp"
#include "wpp/fft.hpp"
#include "wpp/forward_operator.hpp"
#include "wpp/image.hpp"
#include "wpp/io.hpp"
#include "wpp/metrics.hpp"
#include "wpp/network.hpp"
#include "wpp/pipelines.hpp"
#include "wpp/texture.hpp"
#include "wpp/transport.hpp"
#include "wpp/variational.hpp"
