#include "tagteam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "csv.hpp"
#include "tagteam/error.hpp"
#include "tagteam/protocol.hpp"

namespace tagteam::eval {

namespace {

// Shifts whose mean distance differs by less than this (normalized units)
// count as tied; periodic paths would otherwise report whole-period lags.
constexpr double kLagTieTolerance = 1e-9;

double point_distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::vector<Point2> positions(const Trajectory& t) {
  std::vector<Point2> out;
  out.reserve(t.points.size());
  for (const auto& s : t.points) out.push_back(s.p);
  return out;
}

Trajectory normalized(const Trajectory& t) {
  Trajectory out = t;
  const auto norm = normalize_shape(positions(t));
  for (std::size_t i = 0; i < norm.size(); ++i) out.points[i].p = norm[i];
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n, lo);
  if (n < 2) return g;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  g.back() = hi;
  return g;
}

struct Aligned {
  std::vector<Point2> a;
  std::vector<Point2> b;
  double period = 0.0;
};

Aligned align(const Trajectory& a, const Trajectory& b) {
  validate(a);
  validate(b);
  const Trajectory na = normalized(a);
  const Trajectory nb = normalized(b);
  const std::size_t n = std::max(a.points.size(), b.points.size());

  const double lo = std::max(a.points.front().t, b.points.front().t);
  const double hi = std::min(a.points.back().t, b.points.back().t);
  Aligned out;
  if (hi > lo) {
    const auto grid = linspace(lo, hi, n);
    out.a = resample(na, grid);
    out.b = resample(nb, grid);
    out.period = n > 1 ? (hi - lo) / static_cast<double>(n - 1) : 0.0;
  } else {
    const auto ga = linspace(a.points.front().t, a.points.back().t, n);
    const auto gb = linspace(b.points.front().t, b.points.back().t, n);
    out.a = resample(na, ga);
    out.b = resample(nb, gb);
    out.period = 0.0;
  }
  return out;
}

double mean_shifted_distance(const std::vector<Point2>& a, const std::vector<Point2>& b, long shift) {
  const long n = static_cast<long>(a.size());
  double total = 0.0;
  long count = 0;
  for (long i = 0; i < n; ++i) {
    const long j = i + shift;
    if (j < 0 || j >= n) continue;
    total += point_distance(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
    ++count;
  }
  return count > 0 ? total / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

}  // namespace

void validate(const Trajectory& traj) {
  if (traj.points.empty()) throw Error(ErrorKind::InvalidInput, "trajectory '" + traj.label + "' is empty");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const auto& s = traj.points[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.p.x) || !std::isfinite(s.p.y)) {
      throw Error(ErrorKind::InvalidInput, "trajectory '" + traj.label + "' has a non-finite sample");
    }
    if (i > 0 && !(s.t > traj.points[i - 1].t)) {
      throw Error(ErrorKind::InvalidInput, "trajectory '" + traj.label + "' times are not strictly increasing");
    }
  }
}

DtwResult dtw(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidInput, "dtw: sequences must be non-empty");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  // cost[(i+1)*(m+1) + (j+1)] is the best cumulative cost ending at (i, j)
  std::vector<double> cost((n + 1) * (m + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return cost[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const double best = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
      at(i, j) = point_distance(a[i - 1], b[j - 1]) + best;
    }
  }

  DtwResult out;
  out.distance = at(n, m);
  std::size_t i = n;
  std::size_t j = m;
  out.path.emplace_back(i - 1, j - 1);
  while (i > 1 || j > 1) {
    if (i == 1) {
      --j;
    } else if (j == 1) {
      --i;
    } else {
      const double diag = at(i - 1, j - 1);
      const double up = at(i - 1, j);
      const double left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    out.path.emplace_back(i - 1, j - 1);
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

std::vector<Point2> normalize_shape(std::span<const Point2> points) {
  std::vector<Point2> out(points.begin(), points.end());
  if (out.empty()) return out;
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : out) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(out.size());
  cy /= static_cast<double>(out.size());
  double radius = 0.0;
  for (auto& p : out) {
    p.x -= cx;
    p.y -= cy;
    radius = std::max(radius, std::hypot(p.x, p.y));
  }
  const bool all_equal = std::all_of(points.begin(), points.end(),
                                     [&](const Point2& p) { return p == points.front(); });
  if (all_equal) {
    for (auto& p : out) p = Point2{};
    return out;
  }
  if (radius > 0.0) {
    for (auto& p : out) {
      p.x /= radius;
      p.y /= radius;
    }
  }
  return out;
}

std::vector<Point2> resample(const Trajectory& traj, std::span<const double> grid) {
  const auto& pts = traj.points;
  std::vector<Point2> out;
  out.reserve(grid.size());
  std::size_t k = 0;
  for (const double t : grid) {
    if (t <= pts.front().t) {
      out.push_back(pts.front().p);
      continue;
    }
    if (t >= pts.back().t) {
      out.push_back(pts.back().p);
      continue;
    }
    while (k + 1 < pts.size() && pts[k + 1].t < t) ++k;
    const auto& lo = pts[k];
    const auto& hi = pts[k + 1];
    const double u = (t - lo.t) / (hi.t - lo.t);
    out.push_back(Point2{lo.p.x + u * (hi.p.x - lo.p.x), lo.p.y + u * (hi.p.y - lo.p.y)});
  }
  return out;
}

double similarity(const Trajectory& a, const Trajectory& b) { return sync_report(a, b).similarity; }

SyncReport sync_report(const Trajectory& a, const Trajectory& b) {
  const Aligned al = align(a, b);
  const DtwResult d = dtw(al.a, al.b);

  SyncReport r;
  r.dtw_distance = d.distance;
  r.path_length = d.path.size();
  r.similarity = 1.0 / (1.0 + d.distance / static_cast<double>(d.path.size()));

  const long half = static_cast<long>(al.a.size() / 2);
  long best_shift = 0;
  double best = mean_shifted_distance(al.a, al.b, 0);
  for (long s = 1; s <= half; ++s) {
    for (const long shift : {-s, s}) {
      const double v = mean_shifted_distance(al.a, al.b, shift);
      if (v < best - kLagTieTolerance) {
        best = v;
        best_shift = shift;
      }
    }
  }
  r.lag_estimate = static_cast<double>(best_shift) * al.period;
  return r;
}

std::string to_json(const SyncReport& r) {
  using protocol::format_number;
  return "{\"dtw_distance\":" + format_number(r.dtw_distance) + ",\"similarity\":" + format_number(r.similarity) +
         ",\"path_length\":" + std::to_string(r.path_length) + ",\"lag_estimate\":" + format_number(r.lag_estimate) +
         "}";
}

std::string summary(const SyncReport& r) {
  using protocol::format_number;
  return "similarity=" + format_number(r.similarity) + " dtw=" + format_number(r.dtw_distance) +
         " path=" + std::to_string(r.path_length) + " lag=" + format_number(r.lag_estimate) + "s";
}

std::map<std::string, Trajectory> load_annotations(std::istream& in, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error(ErrorKind::InvalidInput, "fps must be > 0");
  detail::expect_header(in, "frame,label,xmin,ymin,xmax,ymax");

  std::map<std::string, std::vector<std::pair<long long, Point2>>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 6 columns");
    }
    const long long frame = detail::parse_int(cells[0], lineno, "frame");
    if (frame < 0) throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": frame must be >= 0");
    if (cells[1].empty()) throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": empty label");
    const double xmin = detail::parse_double(cells[2], lineno, "xmin");
    const double ymin = detail::parse_double(cells[3], lineno, "ymin");
    const double xmax = detail::parse_double(cells[4], lineno, "xmax");
    const double ymax = detail::parse_double(cells[5], lineno, "ymax");
    if (xmax < xmin || ymax < ymin) {
      throw Error(ErrorKind::Validation, "line " + std::to_string(lineno) + ": box max is smaller than min");
    }
    rows[cells[1]].emplace_back(frame, Point2{(xmin + xmax) / 2.0, (ymin + ymax) / 2.0});
  }

  std::map<std::string, Trajectory> out;
  for (auto& [label, boxes] : rows) {
    std::stable_sort(boxes.begin(), boxes.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    Trajectory traj;
    traj.label = label;
    traj.units = Units::Pixels;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (i > 0 && boxes[i].first == boxes[i - 1].first) {
        throw Error(ErrorKind::Validation,
                    "label '" + label + "' has two boxes for frame " + std::to_string(boxes[i].first));
      }
      traj.points.push_back(Sample{static_cast<double>(boxes[i].first) / fps, boxes[i].second});
    }
    out.emplace(label, std::move(traj));
  }
  return out;
}

std::map<std::string, Trajectory> load_annotations(const std::string& path, double fps) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path + "'");
  return load_annotations(in, fps);
}

}  // namespace tagteam::eval
