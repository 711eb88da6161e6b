#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace tuttenet {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// A point fell outside the square domain of a layer. `layer` and
/// `point_index` are -1 when not known at the throw site.
class OutOfDomain : public Error {
public:
  OutOfDomain(const std::string& what, int layer, long point_index, Eigen::Vector3d point)
      : Error(what), layer_(layer), point_index_(point_index), point_(point) {}

  int layer() const { return layer_; }
  long point_index() const { return point_index_; }
  const Eigen::Vector3d& point() const { return point_; }

private:
  int layer_;
  long point_index_;
  Eigen::Vector3d point_;
};

/// A point lies outside the image polygon of a layer (inverse evaluation).
class NotInImage : public Error {
public:
  NotInImage(const std::string& what, int layer, long point_index, Eigen::Vector3d point)
      : Error(what), layer_(layer), point_index_(point_index), point_(point) {}

  int layer() const { return layer_; }
  long point_index() const { return point_index_; }
  const Eigen::Vector3d& point() const { return point_; }

private:
  int layer_;
  long point_index_;
  Eigen::Vector3d point_;
};

class NumericalFailure : public Error {
public:
  using Error::Error;
};

/// Broken internal guarantee (e.g. a Tutte embedding with a non-positive
/// triangle). Always a bug, never an input problem.
class InternalError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

} // namespace tuttenet
