#pragma once

// Textual-numerical series, their JSON-lines storage, chronological
// splitting and sliding-window construction.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dpmts/error.hpp"
#include "json.hpp"

namespace dpmts {

struct Observation {
  std::string timestamp;  // ISO-8601 date or date-time
  double x = 0.0;
  std::string text;
};

/// Seconds since the Unix epoch for "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS[Z]".
inline std::int64_t parse_timestamp(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%n", &y, &mo, &d, &consumed) != 3 || consumed != 10)
    throw ValidationError("timestamp '" + s + "' is not an ISO-8601 date");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok()) throw ValidationError("timestamp '" + s + "' is not a valid calendar date");
  if (s.size() > 10) {
    int rest = 0;
    if ((s[10] != 'T' && s[10] != ' ') ||
        std::sscanf(s.c_str() + 11, "%2u:%2u:%2u%n", &hh, &mm, &ss, &rest) != 3 || hh > 23 || mm > 59 || ss > 60)
      throw ValidationError("timestamp '" + s + "' has a malformed time part");
    const std::string tail = s.substr(11 + static_cast<std::size_t>(rest));
    if (!tail.empty() && tail != "Z") throw ValidationError("timestamp '" + s + "' has an unsupported suffix");
  }
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

inline std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

struct TextedSeries {
  std::string id;
  std::string frequency = "daily";
  std::string description;  // optional dataset description used by the explicit prompt
  std::vector<Observation> observations;

  std::size_t size() const { return observations.size(); }

  void validate() const {
    for (std::size_t i = 0; i < observations.size(); ++i) {
      if (!std::isfinite(observations[i].x))
        throw ValidationError("series '" + id + "': non-finite value at index " + std::to_string(i));
      if (i > 0 && parse_timestamp(observations[i].timestamp) <= parse_timestamp(observations[i - 1].timestamp))
        throw ValidationError("series '" + id + "': timestamps not strictly increasing at index " + std::to_string(i));
    }
    if (!observations.empty()) parse_timestamp(observations.front().timestamp);
  }

  /// Explicit-prompt description: the stored one, or a default built from id and frequency.
  std::string prompt_description() const {
    if (!description.empty()) return description;
    return "The " + id + " dataset is a " + frequency + " time series with timestamped text.";
  }
};

// ---- JSON lines ----

inline std::string to_jsonl(const TextedSeries& series) {
  std::string out;
  for (const auto& o : series.observations) {
    out += nlohmann::json{{"t", o.timestamp}, {"x", o.x}, {"s", o.text}}.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Observation> parse_jsonl(std::istream& in, const std::string& source) {
  std::vector<Observation> obs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("t") || !j["t"].is_string() || !j.contains("x") || !j["x"].is_number() ||
        !j.contains("s") || !j["s"].is_string())
      throw ValidationError(where + ": expected {\"t\": string, \"x\": number, \"s\": string}");
    obs.push_back({j["t"].get<std::string>(), j["x"].get<double>(), j["s"].get<std::string>()});
  }
  return obs;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct ManifestEntry {
  std::string id;
  std::string file;  // relative to the manifest's directory
  std::string frequency;
  std::string description;
};

/// Writes one JSONL file per series plus manifest.json into `dir`.
inline void write_dataset(const std::filesystem::path& dir, const std::vector<TextedSeries>& series) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : series) {
    const std::string file = s.id + ".jsonl";
    write_text_file(dir / file, to_jsonl(s));
    nlohmann::json e{{"id", s.id}, {"file", file}, {"frequency", s.frequency}};
    if (!s.description.empty()) e["description"] = s.description;
    entries.push_back(std::move(e));
  }
  write_text_file(dir / "manifest.json", nlohmann::json{{"series", entries}}.dump(2) + "\n");
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("series") || !j["series"].is_array())
    throw ValidationError("manifest " + manifest.string() + " needs a \"series\" array");
  std::vector<ManifestEntry> out;
  for (const auto& e : j["series"]) {
    if (!e.is_object() || !e.contains("id") || !e.contains("file"))
      throw ValidationError("manifest " + manifest.string() + ": every series needs \"id\" and \"file\"");
    out.push_back({e["id"].get<std::string>(), e["file"].get<std::string>(), e.value("frequency", std::string("daily")),
                   e.value("description", std::string())});
  }
  return out;
}

/// Loads the series listed in a manifest; an empty `ids` selects all of them.
inline std::vector<TextedSeries> load_dataset(const std::filesystem::path& manifest,
                                              const std::vector<std::string>& ids = {}) {
  std::vector<TextedSeries> out;
  const auto entries = read_manifest(manifest);
  for (const auto& id : ids) {
    bool found = false;
    for (const auto& e : entries) found = found || e.id == id;
    if (!found) throw ValidationError("series '" + id + "' is not listed in " + manifest.string());
  }
  for (const auto& e : entries) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), e.id) == ids.end()) continue;
    const auto path = manifest.parent_path() / e.file;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read series file " + path.string());
    TextedSeries s{e.id, e.frequency, e.description, parse_jsonl(in, path.string())};
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

// ---- splitting and windows ----

struct Segment {
  std::string name;
  std::size_t begin = 0;  // first observation index
  std::size_t end = 0;    // one past the last

  std::size_t size() const { return end - begin; }
};

struct SplitRatio {
  double train = 0.7;
  double validation = 0.2;
  double test = 0.1;
};

/// Boundaries at floor(n·train) and floor(n·(train+validation)); every
/// segment must hold at least one window of L inputs and T targets.
inline std::array<Segment, 3> chronological_split(std::size_t n, const SplitRatio& ratio, std::size_t lookback,
                                                  std::size_t horizon) {
  // The 1e-9 nudge keeps products like 100·0.9 = 89.999… on the intended integer.
  const auto cut = [n](double frac) {
    return std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9)));
  };
  const std::size_t b1 = cut(ratio.train);
  const std::size_t b2 = cut(ratio.train + ratio.validation);
  std::array<Segment, 3> seg{Segment{"train", 0, b1}, Segment{"validation", b1, b2}, Segment{"test", b2, n}};
  for (const auto& s : seg)
    if (s.size() < lookback + horizon)
      throw InsufficientDataError(s.name + " segment has " + std::to_string(s.size()) + " observations, needs at least " +
                                  std::to_string(lookback + horizon) + " for one window");
  return seg;
}

struct WindowSample {
  std::size_t start = 0;  // series index of the first input
  std::vector<double> inputs;
  std::vector<std::string> summaries;
  std::vector<double> targets;
};

/// Stride-1 windows fully inside `segment`: inputs [i, i+L), targets [i+L, i+L+T).
inline std::vector<WindowSample> make_windows(const TextedSeries& series, const Segment& segment, std::size_t lookback,
                                              std::size_t horizon) {
  if (segment.end > series.size() || segment.begin > segment.end)
    throw ContractViolation("segment [" + std::to_string(segment.begin) + ", " + std::to_string(segment.end) +
                            ") lies outside series '" + series.id + "'");
  if (segment.size() < lookback + horizon)
    throw InsufficientDataError(segment.name + " segment of '" + series.id + "' is shorter than one window");
  std::vector<WindowSample> out;
  for (std::size_t i = segment.begin; i + lookback + horizon <= segment.end; ++i) {
    WindowSample w;
    w.start = i;
    for (std::size_t k = i; k < i + lookback; ++k) {
      w.inputs.push_back(series.observations[k].x);
      w.summaries.push_back(series.observations[k].text);
    }
    for (std::size_t k = i + lookback; k < i + lookback + horizon; ++k) w.targets.push_back(series.observations[k].x);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace dpmts
