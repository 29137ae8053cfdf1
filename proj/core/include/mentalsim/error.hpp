#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mentalsim {

enum class Errc {
  MalformedXml,
  UnsupportedJointType,
  DanglingLinkReference,
  CyclicJointGraph,
  UnknownName,
  UnknownNode,
  UnknownJoint,
  WouldCreateCycle,
  DegenerateTarget,
  EmptyTrajectory,
  NotGrasped,
  EpisodeClosed,
  StorageFailure,
  OutOfRange,
  UnknownPath,
  TooFewPoints,
  DimensionMismatch,
  ZeroBaseline,
  PlanValidation,
  BindFailure,
  InvalidArgument,
};

std::string_view to_string(Errc code);

// Single exception type for the library; the code says what failed, the
// message says where.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mentalsim
