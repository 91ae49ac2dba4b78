#include "mlr/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "mlr/errors.hpp"

namespace mlr {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kMarginL = 60, kMarginR = 20, kMarginT = 40, kMarginB = 50;

struct Scale {
  double x_min, x_max, y_min, y_max;
  double sx(double x) const {
    double span = x_max > x_min ? x_max - x_min : 1.0;
    return kMarginL + (x - x_min) / span * (kWidth - kMarginL - kMarginR);
  }
  double sy(double y) const {
    double span = y_max > y_min ? y_max - y_min : 1.0;
    return kHeight - kMarginB - (y - y_min) / span * (kHeight - kMarginT - kMarginB);
  }
};

void svg_header(std::ofstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
}

void svg_axes(std::ofstream& out, const Scale& s, const std::string& x_label,
              const std::string& y_label) {
  out << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB << "\" x2=\""
      << kWidth - kMarginR << "\" y2=\"" << kHeight - kMarginB
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
      << "\" y2=\"" << kHeight - kMarginB << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  char buf[128];
  for (int i = 0; i <= 4; ++i) {
    double fx = s.x_min + (s.x_max - s.x_min) * i / 4.0;
    double fy = s.y_min + (s.y_max - s.y_min) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "%.3g", fx);
    out << "<text x=\"" << s.sx(fx) << "\" y=\"" << kHeight - kMarginB + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", fy);
    out << "<text x=\"" << kMarginL - 8 << "\" y=\"" << s.sy(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
  }
  out << "<text x=\"" << (kMarginL + kWidth - kMarginR) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kMarginT + kHeight - kMarginB) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
      << (kMarginT + kHeight - kMarginB) / 2 << ")\">" << y_label << "</text>\n";
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const Scale& s,
                     const std::string& color, double width) {
  std::string out = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
                    std::to_string(width) + "\" points=\"";
  char buf[64];
  for (const auto& [x, y] : pts) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", s.sx(x), s.sy(y));
    out += buf;
  }
  return out + "\"/>\n";
}

}  // namespace

void emit_training_curve(const std::vector<std::vector<MetricRecord>>& seed_logs,
                         const std::string& split, const std::string& name,
                         const std::string& title, const std::string& out_path) {
  // step -> values across seeds
  std::map<int64_t, std::vector<double>> by_step;
  for (const auto& log : seed_logs)
    for (const auto& r : log)
      if (r.split == split && r.name == name) by_step[r.step].push_back(r.value);
  if (by_step.empty()) throw EmptyLog("no records for " + split + "/" + name);

  std::vector<std::pair<double, double>> mean_pts, upper_pts, lower_pts;
  for (const auto& [step, values] : by_step) {
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(values.size()));
    mean_pts.push_back({static_cast<double>(step), mean});
    upper_pts.push_back({static_cast<double>(step), mean + sd});
    lower_pts.push_back({static_cast<double>(step), mean - sd});
  }

  Scale s{};
  s.x_min = mean_pts.front().first;
  s.x_max = mean_pts.back().first;
  s.y_min = lower_pts.front().second;
  s.y_max = upper_pts.front().second;
  for (const auto& p : lower_pts) s.y_min = std::min(s.y_min, p.second);
  for (const auto& p : upper_pts) s.y_max = std::max(s.y_max, p.second);
  if (s.y_max == s.y_min) s.y_max = s.y_min + 1;

  std::ofstream out(out_path);
  if (!out) throw FileNotFound("cannot write figure: " + out_path);
  svg_header(out, title);
  svg_axes(out, s, "environment steps", name);

  // std band as a closed polygon (upper path then reversed lower path)
  out << "<polygon fill=\"#4878cf\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  char buf[64];
  for (const auto& [x, y] : upper_pts) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", s.sx(x), s.sy(y));
    out << buf;
  }
  for (auto it = lower_pts.rbegin(); it != lower_pts.rend(); ++it) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", s.sx(it->first), s.sy(it->second));
    out << buf;
  }
  out << "\"/>\n";
  out << polyline(mean_pts, s, "#4878cf", 2.0);
  out << "</svg>\n";
}

void emit_profile_curve(const std::vector<double>& taus, const std::vector<double>& fractions,
                        const std::string& title, const std::string& out_path) {
  if (taus.empty() || taus.size() != fractions.size())
    throw InvalidArgument("profile curve needs matching tau/fraction grids");
  Scale s{taus.front(), taus.back(), 0.0, 1.0};
  if (s.x_max == s.x_min) s.x_max = s.x_min + 1;

  std::ofstream out(out_path);
  if (!out) throw FileNotFound("cannot write figure: " + out_path);
  svg_header(out, title);
  svg_axes(out, s, "human-normalized score (tau)", "fraction of runs > tau");
  std::vector<std::pair<double, double>> pts;
  for (size_t i = 0; i < taus.size(); ++i) pts.push_back({taus[i], fractions[i]});
  out << polyline(pts, s, "#d1022f", 2.0);
  out << "</svg>\n";
}

}  // namespace mlr
