// Copyright 2026 The causaltext Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CAUSALTEXT_ERROR_HPP
#define CAUSALTEXT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace causaltext {

/// Domain errors map to exit status 1, usage errors to 2.
enum class ErrorKind { Domain, Usage };

/// Every failure carries a stable, greppable code such as `E_SELF_LOOP`.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message,
        ErrorKind kind = ErrorKind::Domain)
      : std::runtime_error(message), code_(std::move(code)), kind_(kind) {}

  const std::string& code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string code_;
  ErrorKind kind_;
};

}  // namespace causaltext

#endif  // CAUSALTEXT_ERROR_HPP
