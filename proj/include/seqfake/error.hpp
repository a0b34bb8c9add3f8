#pragma once

#include <stdexcept>
#include <string>

namespace seqfake {

// Every error the library throws derives from Error so the CLI can map it to
// an exit code in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class VocabError : public Error { public: using Error::Error; };
class LengthError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class BatchError : public Error { public: using Error::Error; };
class BindingError : public Error { public: using Error::Error; };
class SpecError : public Error { public: using Error::Error; };
class IncompatibleError : public Error { public: using Error::Error; };

}  // namespace seqfake
