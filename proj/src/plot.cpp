#include "hmt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace hmt {

std::optional<RelativeTrajectory> relative_trajectory(const EpisodeRecord& record) {
  std::optional<Neutralization> hit;
  for (const auto& s : record.steps) {
    for (const auto& e : s.events)
      if (const auto* n = std::get_if<Neutralization>(&e)) {
        hit = *n;
        break;
      }
    if (hit) break;
  }
  if (!hit) return std::nullopt;

  RelativeTrajectory tr;
  tr.episode_id = record.header.episode_id;
  tr.blue = hit->by;
  tr.red = hit->target;
  tr.zone_radius = record.header.config.zone.radius;
  const Vec2 zone = record.header.config.zone.center;
  auto add = [&](const std::vector<EntitySnapshot>& state) {
    const auto find = [&](EntityId id) -> const EntitySnapshot* {
      for (const auto& e : state)
        if (e.id == id) return &e;
      return nullptr;
    };
    const auto* b = find(tr.blue);
    const auto* r = find(tr.red);
    if (!b || !r) return;
    tr.red_path.push_back(r->pos - b->pos);
    tr.zone_path.push_back(zone - b->pos);
  };
  add(record.header.initial_state);
  for (const auto& s : record.steps) {
    add(s.state);
    if (s.t + 1 > hit->t) break;
  }
  return tr;
}

namespace {

struct Frame {
  double x0, x1, y0, y1;   // data bounds
  double w = 640, h = 480;  // plot area
  double pad = 50;
  double sx(double x) const { return pad + (x - x0) / (x1 - x0) * w; }
  double sy(double y) const { return pad + h - (y - y0) / (y1 - y0) * h; }
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string polyline(const Frame& f, const std::vector<Vec2>& pts, const std::string& cls, const std::string& color,
                     const std::string& id) {
  std::ostringstream s;
  s << "<polyline class=\"" << cls << "\" data-episode=\"" << id << "\" fill=\"none\" stroke=\"" << color
    << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << num(f.sx(pts[i].x)) << ',' << num(f.sy(pts[i].y));
  s << "\"/>\n";
  return s.str();
}

const char* kPalette[] = {"#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string svg_open(const Frame& f) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.w + 2 * f.pad) << "\" height=\""
    << num(f.h + 2 * f.pad) << "\" viewBox=\"0 0 " << num(f.w + 2 * f.pad) << ' ' << num(f.h + 2 * f.pad)
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

}  // namespace

std::string trajectories_svg(const std::vector<RelativeTrajectory>& trs) {
  double lim = 1.0;
  for (const auto& t : trs) {
    for (const auto& p : t.red_path) lim = std::max({lim, std::abs(p.x), std::abs(p.y)});
    for (const auto& p : t.zone_path) lim = std::max({lim, std::abs(p.x) + t.zone_radius, std::abs(p.y) + t.zone_radius});
  }
  lim *= 1.05;
  Frame f{-lim, lim, -lim, lim};
  f.h = f.w;
  std::ostringstream s;
  s << svg_open(f);
  s << "<text x=\"" << num(f.pad) << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">"
    << "Red and zone relative to the neutralizing blue UAV (m)</text>\n";
  // axes through the origin
  s << "<line class=\"axis\" x1=\"" << num(f.sx(-lim)) << "\" y1=\"" << num(f.sy(0)) << "\" x2=\"" << num(f.sx(lim))
    << "\" y2=\"" << num(f.sy(0)) << "\" stroke=\"#ccc\"/>\n";
  s << "<line class=\"axis\" x1=\"" << num(f.sx(0)) << "\" y1=\"" << num(f.sy(-lim)) << "\" x2=\"" << num(f.sx(0))
    << "\" y2=\"" << num(f.sy(lim)) << "\" stroke=\"#ccc\"/>\n";
  for (std::size_t i = 0; i < trs.size(); ++i) {
    const auto& t = trs[i];
    const std::string color = kPalette[i % (sizeof(kPalette) / sizeof(*kPalette))];
    s << "<g class=\"episode\" data-episode=\"" << t.episode_id << "\">\n";
    s << polyline(f, t.zone_path, "zone-trace", "#2ca02c", t.episode_id);
    if (!t.zone_path.empty()) {
      const Vec2 z = t.zone_path.back();
      s << "<circle class=\"zone-final\" cx=\"" << num(f.sx(z.x)) << "\" cy=\"" << num(f.sy(z.y)) << "\" r=\""
        << num(t.zone_radius / (f.x1 - f.x0) * f.w) << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-dasharray=\"4 3\"/>\n";
    }
    s << polyline(f, t.red_path, "red-trace", color, t.episode_id);
    if (!t.red_path.empty()) {
      const Vec2 r = t.red_path.front();
      s << "<circle class=\"red-start\" cx=\"" << num(f.sx(r.x)) << "\" cy=\"" << num(f.sy(r.y))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    s << "</g>\n";
  }
  // blue star at the origin
  std::ostringstream star;
  for (int k = 0; k < 10; ++k) {
    const double a = -kPi / 2 + k * kPi / 5;
    const double r = k % 2 ? 4.0 : 10.0;
    star << (k ? " " : "") << num(f.sx(0) + r * std::cos(a)) << ',' << num(f.sy(0) + r * std::sin(a));
  }
  s << "<polygon id=\"origin\" class=\"origin-marker\" fill=\"#1f77b4\" points=\"" << star.str() << "\"/>\n";
  s << "</svg>\n";
  return s.str();
}

void write_trajectories_csv(std::ostream& out, const std::vector<RelativeTrajectory>& trs) {
  out << "episode,blue,red,step,red_x,red_y,zone_x,zone_y\n";
  out.precision(10);
  for (const auto& t : trs)
    for (std::size_t i = 0; i < t.red_path.size(); ++i)
      out << t.episode_id << ',' << t.blue << ',' << t.red << ',' << i << ',' << t.red_path[i].x << ','
          << t.red_path[i].y << ',' << t.zone_path[i].x << ',' << t.zone_path[i].y << '\n';
}

std::vector<CurvePoint> mean_curve(const std::vector<EvalPoint>& evals) {
  std::map<std::uint64_t, std::map<int, double>> by_seed;
  std::set<int> episodes;
  for (const auto& p : evals) {
    by_seed[p.seed][p.episode] = p.success_rate;
    episodes.insert(p.episode);
  }
  std::vector<CurvePoint> out;
  for (int ep : episodes) {
    CurvePoint c;
    c.episode = ep;
    c.min = std::numeric_limits<double>::infinity();
    c.max = -c.min;
    double sum = 0.0;
    for (const auto& [seed, series] : by_seed) {
      auto it = series.upper_bound(ep);
      if (it == series.begin()) continue;  // seed not evaluated yet
      const double v = std::prev(it)->second;
      sum += v;
      c.min = std::min(c.min, v);
      c.max = std::max(c.max, v);
      ++c.seeds;
    }
    if (c.seeds == 0) continue;
    c.mean = sum / c.seeds;
    out.push_back(c);
  }
  return out;
}

std::string curves_svg(const std::vector<CurveSeries>& series, std::optional<double> reference) {
  int max_ep = 1;
  for (const auto& s : series)
    for (const auto& p : s.evals) max_ep = std::max(max_ep, p.episode);
  Frame f{0.0, static_cast<double>(max_ep), 0.0, 1.0};
  std::ostringstream s;
  s << svg_open(f);
  s << "<text x=\"" << num(f.pad) << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">"
    << "Success rate vs training episodes</text>\n";
  for (double y : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    s << "<line class=\"grid\" x1=\"" << num(f.sx(0)) << "\" y1=\"" << num(f.sy(y)) << "\" x2=\"" << num(f.sx(max_ep))
      << "\" y2=\"" << num(f.sy(y)) << "\" stroke=\"#eee\"/>\n";
    s << "<text x=\"" << num(f.pad - 30) << "\" y=\"" << num(f.sy(y) + 4) << "\" font-size=\"10\">" << num(y)
      << "</text>\n";
  }
  s << "<text x=\"" << num(f.sx(max_ep) - 20) << "\" y=\"" << num(f.sy(0) + 20) << "\" font-size=\"10\">" << max_ep
    << "</text>\n";
  if (reference)
    s << "<line class=\"reference\" x1=\"" << num(f.sx(0)) << "\" y1=\"" << num(f.sy(*reference)) << "\" x2=\""
      << num(f.sx(max_ep)) << "\" y2=\"" << num(f.sy(*reference)) << "\" stroke=\"#555\" stroke-dasharray=\"6 4\"/>\n";
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto curve = mean_curve(series[i].evals);
    const std::string color = colors[i % 5];
    if (curve.empty()) continue;
    std::ostringstream band;
    for (const auto& c : curve) band << num(f.sx(c.episode)) << ',' << num(f.sy(c.max)) << ' ';
    for (auto it = curve.rbegin(); it != curve.rend(); ++it)
      band << num(f.sx(it->episode)) << ',' << num(f.sy(it->min)) << ' ';
    s << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\""
      << band.str() << "\"/>\n";
    std::vector<Vec2> pts;
    for (const auto& c : curve) pts.push_back({static_cast<double>(c.episode), c.mean});
    s << polyline(f, pts, "curve", color, series[i].label);
    s << "<text class=\"legend\" x=\"" << num(f.sx(0) + 10) << "\" y=\"" << num(f.pad + 15 + 15 * i)
      << "\" font-size=\"12\" fill=\"" << color << "\">" << series[i].label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_curves_csv(std::ostream& out, const std::vector<CurveSeries>& series) {
  out << "label,episode,mean,min,max,seeds\n";
  out.precision(10);
  for (const auto& s : series)
    for (const auto& c : mean_curve(s.evals))
      out << s.label << ',' << c.episode << ',' << c.mean << ',' << c.min << ',' << c.max << ',' << c.seeds << '\n';
}

}  // namespace hmt
