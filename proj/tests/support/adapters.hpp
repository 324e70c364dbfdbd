#pragma once

#include <functional>

#include <gtest/gtest.h>

#include "recat/error.hpp"
#include "support/convert.hpp"

namespace recat_test {

inline recat::Errc error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const recat::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return recat::Errc::Io;
}

}  // namespace recat_test
