// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kvevict {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimError : public Error { using Error::Error; };
class FullyMaskedError : public Error { using Error::Error; };
class UndefinedCorrelation : public Error { using Error::Error; };
class OrderError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ContextError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class BasisError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

/// Malformed KVTR input. `offset()` is the first byte at which the file
/// disagrees with its declared layout.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), m_offset(offset) {}

    std::uint64_t offset() const noexcept { return m_offset; }

private:
    std::uint64_t m_offset;
};

}  // namespace kvevict
