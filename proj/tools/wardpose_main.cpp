// SPDX-License-Identifier: Apache-2.0
#include "wardpose/cli.hpp"

int main(int argc, char** argv) { return wardpose::cli::main(argc, argv); }
