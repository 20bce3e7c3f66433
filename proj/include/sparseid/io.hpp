#pragma once

#include "sparseid/residual.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sparseid {

/// Reads long-format measurements with header `time,channel,value`. Channel
/// names are mapped to state components through `channels` (index = component).
/// Rows sharing a time are grouped into one measurement vector.
[[nodiscard]] MeasurementSet ingest_csv(std::istream& in, const std::vector<std::string>& channels);
[[nodiscard]] MeasurementSet ingest_csv_file(const std::string& path, const std::vector<std::string>& channels);

void write_measurements_csv(std::ostream& os, const MeasurementSet& data, const std::vector<std::string>& channels);

/// t, x1..xn at full precision.
void write_states_csv(std::ostream& os, const std::vector<double>& t, const std::vector<Vec>& x,
                      const std::vector<std::string>& names);

}  // namespace sparseid
