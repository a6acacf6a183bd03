#ifndef BATCHANNO_BATCHANNO_HPP
#define BATCHANNO_BATCHANNO_HPP

#include "context.hpp"
#include "corpus.hpp"
#include "corpus_io.hpp"
#include "distill.hpp"
#include "errors.hpp"
#include "grpo.hpp"
#include "labels.hpp"
#include "metrics.hpp"
#include "promptgen.hpp"
#include "random.hpp"
#include "respparse.hpp"
#include "reward.hpp"

/**
 * @file batchanno.hpp
 *
 * @brief Umbrella header. `http_generator.hpp` is kept separate because it
 * pulls in the HTTP client.
 */

namespace batchanno {

inline constexpr const char* version = "0.1.0";

}

#endif
