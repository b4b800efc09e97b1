#include "qnm/error.hpp"

namespace qnm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NotBangBang: return "NotBangBang";
    case ErrorKind::TailNotConverged: return "TailNotConverged";
    case ErrorKind::ZeroFrequency: return "ZeroFrequency";
    case ErrorKind::ZeroOnContour: return "ZeroOnContour";
    case ErrorKind::MaxDepthExceeded: return "MaxDepthExceeded";
    case ErrorKind::NotIsolated: return "NotIsolated";
    case ErrorKind::NotAtRoot: return "NotAtRoot";
    case ErrorKind::NearMultiple: return "NearMultiple";
    case ErrorKind::BranchCountMismatch: return "BranchCountMismatch";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::StalledDirection: return "StalledDirection";
    case ErrorKind::LostEigenvalue: return "LostEigenvalue";
    case ErrorKind::CollisionDetected: return "CollisionDetected";
    case ErrorKind::NoFeasibleDirection: return "NoFeasibleDirection";
    case ErrorKind::PhaseJump: return "PhaseJump";
    case ErrorKind::OnImaginaryAxis: return "OnImaginaryAxis";
    case ErrorKind::CFLViolation: return "CFLViolation";
    case ErrorKind::DegenerateMedium: return "DegenerateMedium";
    case ErrorKind::FitUnstable: return "FitUnstable";
  }
  return "Unknown";
}

}  // namespace qnm
