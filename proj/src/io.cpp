#include "sparseid/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace sparseid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, int line, const char* what) {
  const std::string f = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
    throw IngestError(line, std::string("cannot parse ") + what + " '" + f + "'");
  }
  return v;
}

}  // namespace

MeasurementSet ingest_csv(std::istream& in, const std::vector<std::string>& channels) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < channels.size(); ++i) index[channels[i]] = static_cast<int>(i);

  std::string line;
  int line_no = 0;
  bool header = false;
  std::map<double, std::vector<std::pair<int, double>>> rows;
  std::set<std::pair<double, int>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (!header) {
      if (fields != std::vector<std::string>{"time", "channel", "value"}) {
        throw IngestError(line_no, "expected header 'time,channel,value'");
      }
      header = true;
      continue;
    }
    if (fields.size() != 3) throw IngestError(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    const double time = parse_number(fields[0], line_no, "time");
    const auto it = index.find(fields[1]);
    if (it == index.end()) throw IngestError(line_no, "unknown channel '" + fields[1] + "'");
    const double value = parse_number(fields[2], line_no, "value");
    if (!seen.insert({time, it->second}).second) {
      throw IngestError(line_no, "duplicate measurement of " + fields[1] + " at t = " + fields[0]);
    }
    rows[time].emplace_back(it->second, value);
  }
  if (!header) throw IngestError(line_no, "empty measurement file");
  if (rows.empty()) throw IngestError(line_no, "measurement file has no data rows");

  MeasurementSet out;
  for (auto& [time, entries] : rows) {
    std::sort(entries.begin(), entries.end());
    std::vector<int> comps;
    Vec y(static_cast<Index>(entries.size()));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      comps.push_back(entries[k].first);
      y[static_cast<Index>(k)] = entries[k].second;
    }
    out.times.push_back(time);
    out.components.push_back(std::move(comps));
    out.values.push_back(std::move(y));
  }
  return out;
}

MeasurementSet ingest_csv_file(const std::string& path, const std::vector<std::string>& channels) {
  std::ifstream in(path);
  if (!in) throw IngestError(0, "cannot open " + path);
  return ingest_csv(in, channels);
}

void write_measurements_csv(std::ostream& os, const MeasurementSet& data, const std::vector<std::string>& channels) {
  os << "time,channel,value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.times.size(); ++i) {
    for (std::size_t k = 0; k < data.components[i].size(); ++k) {
      os << data.times[i] << ',' << channels.at(static_cast<std::size_t>(data.components[i][k])) << ','
         << data.values[i][static_cast<Index>(k)] << '\n';
    }
  }
}

void write_states_csv(std::ostream& os, const std::vector<double>& t, const std::vector<Vec>& x,
                      const std::vector<std::string>& names) {
  os << "t";
  for (const auto& n : names) os << ',' << n;
  os << '\n' << std::setprecision(17);
  for (std::size_t j = 0; j < t.size(); ++j) {
    os << t[j];
    for (Index i = 0; i < x[j].size(); ++i) os << ',' << x[j][i];
    os << '\n';
  }
}

}  // namespace sparseid
