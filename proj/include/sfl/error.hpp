// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sfl {

/// Non-finite values where the pipeline cannot proceed (diverged training,
/// exploded ODE state). Mapped to a distinct process exit code by the CLI.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sfl
