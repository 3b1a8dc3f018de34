// tools/include/dvae_cli/cli.h

// Copyright 2026  The lightdvae Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Library form of the `dvae` command so tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace dvae::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kNumericalError = 2 };

// argv[0] is the program name. Progress goes to `err`, results to `out`.
int run(const std::vector<std::string>& argv, std::ostream& out,
        std::ostream& err);

}  // namespace dvae::cli
