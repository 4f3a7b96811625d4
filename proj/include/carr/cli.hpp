#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "carr/estimators.hpp"

namespace carr::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one subcommand (simulate, fit, forecast, diagnose, mc). args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Fit JSON in the layout written by `fit`; fit_from_json restores what
/// forecasting needs (params, moments, information matrix, pre-sample level).
nlohmann::json fit_to_json(const FitResult& fit, std::size_t n_obs, std::size_t holdout,
                           std::optional<std::uint64_t> seed = std::nullopt);
struct StoredFit {
    FitResult fit;
    std::size_t n_obs = 0;
    std::size_t holdout = 0;
};
StoredFit fit_from_json(const nlohmann::json& j);

}  // namespace carr::cli
