#pragma once

#include <stdexcept>

namespace colorctrl {

// Root of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

// Controller/cache disagreement (wrong n_text, foreign cache, bad hook shapes).
class ControlError : public Error {
public:
    using Error::Error;
};

// Operation attempted in the wrong lifecycle state (unfinalized cache, write after finalize).
class StateError : public Error {
public:
    using Error::Error;
};

class ResourceError : public Error {
public:
    using Error::Error;
};

class ScheduleError : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace colorctrl
