#include "hwrisk/trajio.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "hwrisk/errors.hpp"

namespace hwrisk {

TrajectoryRecord to_record(int frame, int vehicle_id, int lane, const VehicleState& s) {
  TrajectoryRecord r;
  r.frame = frame;
  r.vehicle_id = vehicle_id;
  r.x = s.x;
  r.y = s.y;
  r.v_x = s.v_long();
  r.v_y = s.v_lat();
  r.a_x = s.acceleration * std::cos(s.heading);
  r.a_y = s.acceleration * std::sin(s.heading);
  r.lane = lane;
  r.vclass = s.vclass;
  r.mass = s.mass;
  r.length = s.length;
  r.width = s.width;
  return r;
}

VehicleState to_state(const TrajectoryRecord& r) {
  VehicleState s;
  s.x = r.x;
  s.y = r.y;
  s.speed = std::hypot(r.v_x, r.v_y);
  s.heading = s.speed > 0.0 ? std::atan2(r.v_y, r.v_x) : 0.0;
  s.acceleration = r.a_x * std::cos(s.heading) + r.a_y * std::sin(s.heading);
  s.mass = r.mass;
  s.vclass = r.vclass;
  s.length = r.length;
  s.width = r.width;
  return s;
}

const TrajectoryRecord* Frame::find(int vehicle_id) const {
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), vehicle_id,
                             [](const TrajectoryRecord& r, int id) { return r.vehicle_id < id; });
  return it != vehicles.end() && it->vehicle_id == vehicle_id ? &*it : nullptr;
}

const char* vclass_name(VehicleClass c) { return c == VehicleClass::kHeavy ? "heavy" : "light"; }

namespace {

constexpr std::array<std::string_view, 13> kColumns = {
    "frame", "vehicle_id", "x", "y", "v_x", "v_y", "a_x", "a_y",
    "lane",  "vclass",     "mass", "length", "width"};
constexpr std::size_t kMassColumn = 10;

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view text, int line, std::string_view column) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(line, std::string(column), "not a number: '" + std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError(line, std::string(column), "non-finite value");
  }
  return value;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

}  // namespace

ParsedTrajectory parse_trajectory_csv(std::istream& in) {
  ParsedTrajectory out;
  std::string raw;
  int line_no = 0;
  std::optional<std::array<int, kColumns.size()>> index;  // column -> field position
  std::size_t field_count = 0;
  std::map<int, int> last_frame;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view body = trim(line.substr(1));
      constexpr std::string_view key = "frame_rate:";
      if (body.substr(0, key.size()) == key) {
        out.frame_rate = parse_number<double>(trim(body.substr(key.size())), line_no, "frame_rate");
        if (!(out.frame_rate > 0.0)) throw ParseError(line_no, "frame_rate", "must be positive");
      }
      continue;
    }
    const auto fields = split(line);
    if (!index) {
      std::array<int, kColumns.size()> idx;
      idx.fill(-1);
      for (std::size_t f = 0; f < fields.size(); ++f) {
        const std::string_view name = trim(fields[f]);
        const auto it = std::find(kColumns.begin(), kColumns.end(), name);
        if (it == kColumns.end()) throw ParseError(line_no, std::string(name), "unknown column");
        auto& slot = idx[static_cast<std::size_t>(it - kColumns.begin())];
        if (slot >= 0) throw ParseError(line_no, std::string(name), "duplicate column");
        slot = static_cast<int>(f);
      }
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (idx[c] < 0 && c != kMassColumn) throw MissingColumn(std::string(kColumns[c]));
      }
      out.mass_imputed = idx[kMassColumn] < 0;
      field_count = fields.size();
      index = idx;
      continue;
    }
    if (fields.size() != field_count) {
      throw ParseError(line_no, fields.size() < field_count ? std::string(kColumns[0]) : "row",
                       "expected " + std::to_string(field_count) + " fields, got " +
                           std::to_string(fields.size()));
    }
    auto field = [&](std::size_t c) { return trim(fields[static_cast<std::size_t>((*index)[c])]); };
    auto real = [&](std::size_t c) { return parse_number<double>(field(c), line_no, kColumns[c]); };
    auto integer = [&](std::size_t c) { return parse_number<int>(field(c), line_no, kColumns[c]); };

    TrajectoryRecord r;
    r.frame = integer(0);
    r.vehicle_id = integer(1);
    r.x = real(2);
    r.y = real(3);
    r.v_x = real(4);
    r.v_y = real(5);
    r.a_x = real(6);
    r.a_y = real(7);
    r.lane = integer(8);
    const std::string_view vc = field(9);
    if (vc == "light") {
      r.vclass = VehicleClass::kLight;
    } else if (vc == "heavy") {
      r.vclass = VehicleClass::kHeavy;
    } else {
      throw ParseError(line_no, "vclass", "expected light or heavy, got '" + std::string(vc) + "'");
    }
    if (out.mass_imputed) {
      r.mass = r.vclass == VehicleClass::kHeavy ? kImputedHeavyMass : kImputedLightMass;
    } else {
      r.mass = real(kMassColumn);
      if (!(r.mass > 0.0)) throw ParseError(line_no, "mass", "must be positive");
    }
    r.length = real(11);
    r.width = real(12);
    if (!(r.length > 0.0)) throw ParseError(line_no, "length", "must be positive");
    if (!(r.width > 0.0)) throw ParseError(line_no, "width", "must be positive");
    if (r.frame < 0) throw ParseError(line_no, "frame", "must be non-negative");

    auto [it, fresh] = last_frame.try_emplace(r.vehicle_id, r.frame);
    if (!fresh) {
      if (r.frame < it->second) throw ParseError(line_no, "frame", "decreases for this vehicle");
      if (r.frame == it->second) throw ParseError(line_no, "frame", "repeated for this vehicle");
      it->second = r.frame;
    }
    out.records.push_back(r);
  }
  if (!index) throw MissingColumn("no header line");
  return out;
}

ParsedTrajectory parse_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "file", "cannot open " + path.string());
  return parse_trajectory_csv(in);
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRecord> records,
                          double frame_rate) {
  out << "# frame_rate: " << format_double(frame_rate) << '\n';
  out << "frame,vehicle_id,x,y,v_x,v_y,a_x,a_y,lane,vclass,mass,length,width\n";
  for (const TrajectoryRecord& r : records) {
    out << r.frame << ',' << r.vehicle_id << ',' << format_double(r.x) << ','
        << format_double(r.y) << ',' << format_double(r.v_x) << ',' << format_double(r.v_y)
        << ',' << format_double(r.a_x) << ',' << format_double(r.a_y) << ',' << r.lane << ','
        << vclass_name(r.vclass) << ',' << format_double(r.mass) << ','
        << format_double(r.length) << ',' << format_double(r.width) << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const TrajectoryRecord> records, double frame_rate) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trajectory_csv(out, records, frame_rate);
}

std::vector<TrajectoryRecord> flatten_log(const EpisodeLog& log) {
  std::vector<TrajectoryRecord> out;
  for (const Frame& f : log.frames) out.insert(out.end(), f.vehicles.begin(), f.vehicles.end());
  return out;
}

std::vector<TrajectoryRecord> resample(std::span<const TrajectoryRecord> records,
                                       double frame_rate, double dt) {
  if (std::abs(frame_rate * dt - 1.0) < 1e-12) {
    return {records.begin(), records.end()};
  }
  std::map<int, std::vector<TrajectoryRecord>> tracks;
  for (const TrajectoryRecord& r : records) tracks[r.vehicle_id].push_back(r);
  std::vector<TrajectoryRecord> out;
  for (auto& [id, track] : tracks) {
    std::sort(track.begin(), track.end(),
              [](const TrajectoryRecord& a, const TrajectoryRecord& b) { return a.frame < b.frame; });
    for (std::size_t i = 0; i < track.size(); ++i) {
      const double t0 = track[i].frame / frame_rate;
      const bool bridge = i + 1 < track.size() && track[i + 1].frame == track[i].frame + 1;
      const double t1 = bridge ? track[i + 1].frame / frame_rate : t0;
      const auto k_lo = static_cast<long>(std::ceil(t0 / dt - 1e-9));
      // Half-open per segment so shared endpoints are emitted once.
      const auto k_hi = static_cast<long>(std::floor(t1 / dt + 1e-9));
      for (long k = k_lo; k <= k_hi; ++k) {
        const double t = k * dt;
        if (bridge && t >= t1 - 1e-9 * dt) break;
        const double w = bridge ? (t - t0) / (t1 - t0) : 0.0;
        const TrajectoryRecord& a = track[i];
        const TrajectoryRecord& b = bridge ? track[i + 1] : track[i];
        auto lerp = [w](double p, double q) { return p + w * (q - p); };
        TrajectoryRecord r = a;
        r.frame = static_cast<int>(k);
        r.x = lerp(a.x, b.x);
        r.y = lerp(a.y, b.y);
        r.v_x = lerp(a.v_x, b.v_x);
        r.v_y = lerp(a.v_y, b.v_y);
        r.a_x = lerp(a.a_x, b.a_x);
        r.a_y = lerp(a.a_y, b.a_y);
        out.push_back(r);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.vehicle_id < b.vehicle_id;
  });
  return out;
}

EpisodeLog log_for_subject(std::span<const TrajectoryRecord> records, int subject_id, double dt) {
  std::map<int, std::vector<TrajectoryRecord>> frames;
  bool found = false;
  for (const TrajectoryRecord& r : records) {
    frames[r.frame].push_back(r);
    found = found || r.vehicle_id == subject_id;
  }
  if (!found) throw SubjectNotFound("vehicle " + std::to_string(subject_id));
  EpisodeLog log;
  log.dt = dt;
  log.subject_id = subject_id;
  for (auto& [frame, vehicles] : frames) {
    std::sort(vehicles.begin(), vehicles.end(),
              [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
                return a.vehicle_id < b.vehicle_id;
              });
    Frame f{frame, std::move(vehicles)};
    if (f.find(subject_id) != nullptr) log.frames.push_back(std::move(f));
  }
  log.complete = true;
  return log;
}

EpisodeAnalysis replay_evaluate(std::span<const TrajectoryRecord> records, int subject_id,
                                const MetricsConfig& cfg, double dt) {
  const EpisodeLog log = log_for_subject(records, subject_id, dt);
  if (log.frames.size() < 2) {
    throw IncompleteLog("subject " + std::to_string(subject_id) + " spans fewer than 2 frames");
  }
  return analyze_episode(log, cfg);
}

}  // namespace hwrisk
