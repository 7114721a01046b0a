#include "tendonid/errors.hpp"

namespace tendonid {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "config";
        case ErrorCode::Data: return "data";
        case ErrorCode::Numeric: return "numeric";
        case ErrorCode::Infeasible: return "infeasible";
    }
    return "unknown";
}

}  // namespace tendonid
