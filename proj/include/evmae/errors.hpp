#pragma once

#include <stdexcept>
#include <string>

namespace evmae {

/// Typed failure reasons. Every library error is thrown as Error carrying
/// one of these codes so callers (and the CLI) can map failures to exit
/// codes without string matching.
enum class errc {
    // parsing / ingestion
    malformed_line,
    invalid_polarity,
    out_of_bounds,
    bad_magic,
    truncated,
    unsupported_event_size,
    // sampling
    empty_stream,
    empty_input,
    // patch generation
    k_too_large,
    m_too_large,
    degenerate_neighborhood,
    too_few_points,
    // model
    all_masked,
    shape_mismatch,
    empty_set,
    non_finite_activation,
    non_finite_gradient,
    non_finite_loss,
    // training / evaluation
    label_out_of_range,
    empty_eval_set,
    // checkpoints
    bad_checkpoint,
    version_mismatch,
    corrupt,
    missing_checkpoint,
    // configuration
    invalid_config,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::malformed_line: return "malformed_line";
        case errc::invalid_polarity: return "invalid_polarity";
        case errc::out_of_bounds: return "out_of_bounds";
        case errc::bad_magic: return "bad_magic";
        case errc::truncated: return "truncated";
        case errc::unsupported_event_size: return "unsupported_event_size";
        case errc::empty_stream: return "empty_stream";
        case errc::empty_input: return "empty_input";
        case errc::k_too_large: return "k_too_large";
        case errc::m_too_large: return "m_too_large";
        case errc::degenerate_neighborhood: return "degenerate_neighborhood";
        case errc::too_few_points: return "too_few_points";
        case errc::all_masked: return "all_masked";
        case errc::shape_mismatch: return "shape_mismatch";
        case errc::empty_set: return "empty_set";
        case errc::non_finite_activation: return "non_finite_activation";
        case errc::non_finite_gradient: return "non_finite_gradient";
        case errc::non_finite_loss: return "non_finite_loss";
        case errc::label_out_of_range: return "label_out_of_range";
        case errc::empty_eval_set: return "empty_eval_set";
        case errc::bad_checkpoint: return "bad_checkpoint";
        case errc::version_mismatch: return "version_mismatch";
        case errc::corrupt: return "corrupt";
        case errc::missing_checkpoint: return "missing_checkpoint";
        case errc::invalid_config: return "invalid_config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }

    /// true for failures of numeric computation (as opposed to bad data).
    bool numeric() const noexcept {
        return code_ == errc::non_finite_activation || code_ == errc::non_finite_gradient ||
               code_ == errc::non_finite_loss;
    }

private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
    if (!cond) raise(code, what);
}

}  // namespace evmae
