#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sta {

using Real = double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using IntVec = Eigen::VectorXi;
using BoolVec = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 1 (usage), DataError -> 2, NumericError -> 3.
struct StaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : StaError {
  using StaError::StaError;
};
struct ShapeError : StaError {
  using StaError::StaError;
};
struct DataError : StaError {
  using StaError::StaError;
};
struct NumericError : StaError {
  using StaError::StaError;
};

}  // namespace sta
