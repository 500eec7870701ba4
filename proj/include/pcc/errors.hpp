#pragma once

#include <stdexcept>
#include <string>

namespace pcc {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Conforming-shape violations (matrix dimension mismatches).
struct shape_error : error {
    using error::error;
};

// Precondition violations other than shapes.
struct contract_error : error {
    using error::error;
};

// A feature vector fell below the cosine-similarity norm floor.
struct degenerate_error : error {
    using error::error;
};

// File format / filesystem failures.
struct io_error : error {
    using error::error;
};

// Non-finite state detected during optimization.
struct train_error : error {
    using error::error;
};

}  // namespace pcc
