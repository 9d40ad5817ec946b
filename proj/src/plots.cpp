#include "pic/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pic {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

/// Roughly five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

}  // namespace

std::size_t metric_column(const std::string& metric) {
  std::stringstream ss(kCsvHeader);
  std::string name;
  std::getline(ss, name, ',');  // env_step
  for (std::size_t i = 0; std::getline(ss, name, ','); ++i)
    if (name == metric) return i;
  throw Error("unknown metric '" + metric + "'");
}

std::vector<std::filesystem::path> seed_csvs(const std::filesystem::path& log_dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(log_dir)) throw Error("not a directory: " + log_dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(log_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("seed_") && name.ends_with(".csv")) out.push_back(entry.path());
  }
  if (out.empty()) throw Error("no seed_*.csv files in " + log_dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

PlotSeries load_series(const std::filesystem::path& log_dir, const std::string& metric, double band_factor) {
  if (!(band_factor >= 0.0)) throw Error("band factor must be nonnegative");
  const auto col = metric_column(metric);
  std::vector<std::vector<MetricsRecord>> runs;
  for (const auto& path : seed_csvs(log_dir)) runs.push_back(read_metrics_csv(path));
  PlotSeries s;
  s.label = log_dir.filename().empty() ? log_dir.parent_path().filename().string() : log_dir.filename().string();
  for (const auto& row : aggregate(runs)) {
    if (std::isnan(row.mean[col])) continue;
    s.x.push_back(static_cast<double>(row.env_step));
    s.mean.push_back(row.mean[col]);
    s.lower.push_back(row.mean[col] - band_factor * row.std[col]);
    s.upper.push_back(row.mean[col] + band_factor * row.std[col]);
  }
  return s;
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label) {
  constexpr double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = s.lower[i];
        y1 = s.upper[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.lower[i]);
      y1 = std::max(y1, s.upper[i]);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  const auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (double t : ticks(x0, x1))
    svg << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << H - bottom << "\" x2=\"" << fmt(px(t)) << "\" y2=\"" << H - bottom + 5
        << "\" stroke=\"black\"/><text x=\"" << fmt(px(t)) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">"
        << fmt(t) << "</text>\n";
  for (double t : ticks(y0, y1))
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << W - right << "\" y2=\"" << fmt(py(t))
        << "\" stroke=\"#dddddd\"/><text x=\"" << left - 8 << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\">"
        << fmt(t) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">env steps</text>\n"
      << "<text transform=\"translate(16," << (top + H - bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.x.empty()) continue;
    svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << fmt(px(s.x[i])) << ',' << fmt(py(s.upper[i])) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;) svg << fmt(px(s.x[i])) << ',' << fmt(py(s.lower[i])) << ' ';
    svg << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << fmt(px(s.x[i])) << ',' << fmt(py(s.mean[i])) << ' ';
    svg << "\"/>\n";
    const double ly = top + 8 + 16 * static_cast<double>(k);
    svg << "<line x1=\"" << W - right - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - right - 130 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << W - right - 125 << "\" y=\"" << ly + 4
        << "\">" << escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& log_dirs,
                                              const PlotOptions& options) {
  if (log_dirs.empty()) throw Error("emit_plots needs at least one log directory");
  if (options.metrics.empty()) throw Error("no metrics requested");
  const auto out_dir = options.out_dir.empty() ? log_dirs.front() : options.out_dir;
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& metric : options.metrics) {
    std::vector<PlotSeries> series;
    for (const auto& dir : log_dirs) series.push_back(load_series(dir, metric, options.band_factor));

    std::ofstream data(out_dir / (metric + ".csv"));
    data << "series,env_step,mean,lower,upper\n";
    for (const auto& s : series)
      for (std::size_t i = 0; i < s.x.size(); ++i)
        data << s.label << ',' << s.x[i] << ',' << fmt(s.mean[i], "%.17g") << ',' << fmt(s.lower[i], "%.17g") << ','
             << fmt(s.upper[i], "%.17g") << '\n';

    const auto path = out_dir / (metric + ".svg");
    std::ofstream(path) << render_svg(series, metric + " (mean +/- " + fmt(options.band_factor) + " std)", metric);
    if (!std::filesystem::exists(path)) throw Error("cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace pic
