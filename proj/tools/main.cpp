// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/cli.hpp"

int main(int argc, char** argv) { return onlyflow::cli::run_cli(argc, argv); }
