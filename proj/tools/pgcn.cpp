// SPDX-License-Identifier: Apache-2.0
#include "pgcn/cli.hpp"

int main(int argc, char** argv) { return pgcn::cli::run(argc, argv); }
