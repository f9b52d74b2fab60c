#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ascfam/estimate.hpp"
#include "ascfam/simulate.hpp"

namespace ascfam::io {

using Json = nlohmann::ordered_json;

std::string version();

/// Report object for one fitted model. NaN numbers become null.
Json fit_report(const FitResult& fit, const std::optional<LrtResult>& lrt = std::nullopt);

Json theta_to_json(const Theta& theta);
/// Keys are parameter names without covariates; absent keys keep the value
/// from `defaults`. Throws InputError on unknown keys or non-numbers.
Theta theta_from_json(const Json& j, const Theta& defaults);

/// Every Scenario field, defaults included.
Json scenario_to_json(const Scenario& scenario);
/// Parses a scenario config. Absent keys take the Scenario defaults; unknown
/// keys, wrong types and invalid values throw InputError.
Scenario scenario_from_json(const Json& j);
Json parse_json(std::istream& in, const std::string& what);
Json read_json(const std::string& path);

/// Long format: method,quantity,statistic,value.
void write_summary_csv(std::ostream& out, const SummaryMetrics& summary);
/// One row per replicate, method and free parameter (plus h2):
/// replicate,method,parameter,estimate,se,covered,lrt_p,converged.
void write_replicates_csv(std::ostream& out, const Scenario& scenario,
                          const std::vector<ReplicateResult>& replicates);

/// Shortest decimal that round-trips; empty for NaN.
std::string format_number(double v);

}  // namespace ascfam::io
