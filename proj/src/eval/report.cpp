#include "vln/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "vln/eval/runner.hpp"

namespace vln::eval {

namespace fs = std::filesystem;

namespace {

constexpr int kW = 640, kH = 420, kMargin = 56;

std::string fmt(real x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

void axis_range(const std::vector<real>& vals, real& lo, real& hi) {
  lo = 1e300;
  hi = -1e300;
  for (real v : vals) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo > hi) {
    lo = 0;
    hi = 1;
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
}

}  // namespace

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<real>& xs,
                    const std::vector<std::pair<std::string, std::vector<real>>>& series) {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write plot: " + path);
  real xlo, xhi, ylo, yhi;
  axis_range(xs, xlo, xhi);
  std::vector<real> all;
  for (const auto& [name, ys] : series) all.insert(all.end(), ys.begin(), ys.end());
  axis_range(all, ylo, yhi);

  auto px = [&](real x) { return kMargin + (x - xlo) / (xhi - xlo) * (kW - 2 * kMargin); };
  auto py = [&](real y) { return kH - kMargin - (y - ylo) / (yhi - ylo) * (kH - 2 * kMargin); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};

  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
    << kH << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << title << "</text>\n";
  f << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
    << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
    << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  f << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  f << "<text x=\"16\" y=\"" << kH / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
    << kH / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const real xv = xlo + (xhi - xlo) * tick / 4.0;
    const real yv = ylo + (yhi - ylo) * tick / 4.0;
    f << "<text x=\"" << px(xv) << "\" y=\"" << kH - kMargin + 16
      << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(xv) << "</text>\n";
    f << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(yv) + 4
      << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(yv) << "</text>\n";
  }
  int si = 0;
  for (const auto& [name, ys] : series) {
    const char* color = colors[si % 9];
    std::ostringstream pts;
    for (size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      pts << px(xs[i]) << "," << py(ys[i]) << " ";
    }
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
      << pts.str() << "\"/>\n";
    f << "<text x=\"" << kW - kMargin + 4 << "\" y=\"" << kMargin + 14 * si
      << "\" font-size=\"10\" fill=\"" << color << "\">" << name << "</text>\n";
    ++si;
  }
  f << "</svg>\n";
}

void svg_heatmap(const std::string& path, const std::string& title, int rows, int cols,
                 const std::vector<real>& values) {
  if (static_cast<int>(values.size()) != rows * cols)
    throw VlnError("svg_heatmap: size mismatch");
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write plot: " + path);
  real lo, hi;
  axis_range(values, lo, hi);
  const int cell = std::max(3, std::min(18, 520 / std::max(rows, cols)));
  const int w = cols * cell + 2 * kMargin, h = rows * cell + 2 * kMargin;
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << title << "</text>\n";
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const real v = (values[r * cols + c] - lo) / (hi - lo);
      const int red = static_cast<int>(255 * v);
      const int blue = static_cast<int>(255 * (1.0 - v));
      f << "<rect x=\"" << kMargin + c * cell << "\" y=\"" << kMargin + r * cell
        << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red
        << ",64," << blue << ")\"/>\n";
    }
  f << "</svg>\n";
}

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw VlnError("cannot open " + path);
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      csv.header = fields;
      first = false;
    } else {
      csv.rows.push_back(fields);
    }
  }
  return csv;
}

void echo_table(std::ofstream& out, const std::string& name, const Csv& csv) {
  out << "## " << name << "\n";
  for (size_t i = 0; i < csv.header.size(); ++i)
    out << (i ? " | " : "") << csv.header[i];
  out << "\n";
  for (const auto& row : csv.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? " | " : "") << row[i];
    out << "\n";
  }
  out << "\n";
}

}  // namespace

void write_report(const std::string& run_dir) {
  const RunDir dir{run_dir};
  if (!fs::exists(run_dir))
    throw VlnError("report: run directory does not exist: " + run_dir);
  fs::create_directories(dir.plots());

  std::vector<std::string> gaps;
  int artifacts = 0;
  std::ofstream out(run_dir + "/report.txt");
  if (!out) throw VlnError("report: cannot write report.txt");
  out << "# Run report: " << run_dir << "\n\n";
  out.precision(10);

  // loss curves from traces/*.jsonl
  std::vector<std::string> trace_files;
  if (fs::exists(dir.traces()))
    for (const auto& e : fs::directory_iterator(dir.traces()))
      if (e.path().extension() == ".jsonl") trace_files.push_back(e.path().string());
  std::sort(trace_files.begin(), trace_files.end());
  if (trace_files.empty()) {
    gaps.push_back("traces/*.jsonl (loss curves)");
  } else {
    for (const std::string& tf : trace_files) {
      const auto records = read_trace_jsonl(tf);
      if (records.empty()) continue;
      ++artifacts;
      const std::string stem = fs::path(tf).stem().string();
      std::vector<real> xs;
      std::vector<std::pair<std::string, std::vector<real>>> series = {
          {"L_total", {}}, {"L_Action", {}}, {"L_Map", {}}, {"L_Con", {}},
          {"L_KL", {}},    {"L_Sem", {}},    {"L_Pro", {}}, {"L_PA", {}},
          {"L_SA", {}}};
      for (const auto& r : records) {
        xs.push_back(r.epoch);
        series[0].second.push_back(r.losses.total);
        series[1].second.push_back(r.losses.action);
        series[2].second.push_back(r.losses.map);
        series[3].second.push_back(r.losses.con);
        series[4].second.push_back(r.losses.kl);
        series[5].second.push_back(r.losses.sem);
        series[6].second.push_back(r.losses.pro);
        series[7].second.push_back(r.losses.pa);
        series[8].second.push_back(r.losses.sa);
      }
      svg_line_chart(dir.plots() + "/loss_" + stem + ".svg", "Loss trace: " + stem,
                     "epoch", "loss", xs, series);
      out << "Loss trace " << stem << ": " << records.size() << " epochs, final L_total "
          << records.back().losses.total << " (plots/loss_" << stem << ".svg)\n";
    }
    out << "\n";
  }

  // metric tables from results/*.csv
  std::vector<std::string> result_files;
  if (fs::exists(dir.results()))
    for (const auto& e : fs::directory_iterator(dir.results()))
      if (e.path().extension() == ".csv") result_files.push_back(e.path().string());
  std::sort(result_files.begin(), result_files.end());
  bool any_results = false;
  for (const std::string& rf : result_files) {
    const std::string stem = fs::path(rf).stem().string();
    if (stem.rfind("weights_ep", 0) == 0) continue;
    const Csv csv = read_csv(rf);
    echo_table(out, stem, csv);
    any_results = true;
    ++artifacts;

    // sweep plots: SR vs swept value
    if (stem.rfind("sweep_", 0) == 0 && !csv.rows.empty()) {
      const std::string param = stem.substr(6);
      std::vector<real> xs, sr, spl;
      for (const auto& row : csv.rows) {
        const std::string& name = row[0];  // sweep_<param><value>
        const size_t pos = name.find(param, 6);
        xs.push_back(std::stod(name.substr(pos + param.size())));
        sr.push_back(std::stod(row[2]));
        spl.push_back(std::stod(row[4]));
      }
      svg_line_chart(dir.plots() + "/" + stem + ".svg", "Sweep over " + param, param,
                     "metric (%)", xs, {{"SR", sr}, {"SPL", spl}});
      out << "(sweep plot: plots/" << stem << ".svg)\n\n";
    }
  }
  if (!any_results) gaps.push_back("results/*.csv (metric tables)");

  // instruction-weight heatmaps (Fig. 5 analogue)
  bool any_weights = false;
  for (const std::string& rf : result_files) {
    const std::string stem = fs::path(rf).stem().string();
    if (stem.rfind("weights_ep", 0) != 0) continue;
    const Csv csv = read_csv(rf);
    if (csv.rows.empty()) continue;
    const int rows = static_cast<int>(csv.rows.size());
    const int cols = static_cast<int>(csv.header.size()) - 1;
    std::vector<real> vals;
    vals.reserve(static_cast<size_t>(rows) * cols);
    for (const auto& row : csv.rows)
      for (int c = 1; c <= cols; ++c) vals.push_back(std::stod(row[c]));
    svg_heatmap(dir.plots() + "/" + stem + ".svg",
                "Instruction weights over time: " + stem, rows, cols, vals);
    any_weights = true;
    ++artifacts;
  }
  if (!any_weights) gaps.push_back("results/weights_ep*.csv (instruction-weight matrices)");

  if (artifacts == 0) {
    std::string msg = "report: no usable artifacts in " + run_dir + "; missing:";
    for (const auto& g : gaps) msg += " " + g + ";";
    throw VlnError(msg);
  }
  if (!gaps.empty()) {
    out << "## Missing artifacts\n";
    for (const auto& g : gaps) out << "- " << g << "\n";
  }
}

}  // namespace vln::eval
