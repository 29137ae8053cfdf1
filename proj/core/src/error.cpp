#include "mentalsim/error.hpp"

namespace mentalsim {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedXml: return "MalformedXml";
    case Errc::UnsupportedJointType: return "UnsupportedJointType";
    case Errc::DanglingLinkReference: return "DanglingLinkReference";
    case Errc::CyclicJointGraph: return "CyclicJointGraph";
    case Errc::UnknownName: return "UnknownName";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::UnknownJoint: return "UnknownJoint";
    case Errc::WouldCreateCycle: return "WouldCreateCycle";
    case Errc::DegenerateTarget: return "DegenerateTarget";
    case Errc::EmptyTrajectory: return "EmptyTrajectory";
    case Errc::NotGrasped: return "NotGrasped";
    case Errc::EpisodeClosed: return "EpisodeClosed";
    case Errc::StorageFailure: return "StorageFailure";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::UnknownPath: return "UnknownPath";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroBaseline: return "ZeroBaseline";
    case Errc::PlanValidation: return "PlanValidation";
    case Errc::BindFailure: return "BindFailure";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace mentalsim
