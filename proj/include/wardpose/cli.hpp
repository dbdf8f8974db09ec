// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "wardpose/backend.hpp"
#include "wardpose/config.hpp"
#include "wardpose/error.hpp"

namespace wardpose::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitBadData = 3;
inline constexpr int kExitBackend = 4;
inline constexpr int kExitStall = 5;

int exit_code_for(ErrorCode code) noexcept;

// "synthetic:<script.json>" runs the scripted backend in-process;
// "exec:<command line>" spawns a child speaking the wire protocol.
std::unique_ptr<InferenceBackend> open_backend(const std::string& endpoint, const config::Config& cfg);

// Entry point of the wardpose executable.
int main(int argc, char** argv);

}  // namespace wardpose::cli
