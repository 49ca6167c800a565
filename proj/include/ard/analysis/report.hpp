#pragma once

// CSV rows and small standalone SVG charts with fixed styling.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ard/analysis/attention.hpp"
#include "ard/analysis/exposure.hpp"
#include "ard/analysis/flops.hpp"

namespace ard::report {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string attention_csv(const AttentionReport& r) {
  std::ostringstream os;
  os << "layer,step,input_step,score\n";
  for (std::size_t l = 0; l < r.L; ++l)
    for (std::size_t s = 1; s <= r.S; ++s)
      for (std::size_t si = r.S; si >= 1; --si) os << l << ',' << s << ',' << si << ',' << num(r.at(l, s, si)) << '\n';
  return os.str();
}

inline std::string exposure_csv(const std::vector<std::pair<std::string, ExposureCurve>>& curves) {
  std::ostringstream os;
  os << "model,k,step,mse\n";
  for (const auto& [name, c] : curves)
    for (std::size_t s = 0; s < c.per_step.size(); ++s) os << name << ',' << c.k << ',' << s << ',' << num(c.per_step[s]) << '\n';
  return os.str();
}

inline std::string flops_csv(const FlopsBreakdown& fb) {
  std::ostringstream os;
  os << "step,layer,projections,attn_scores,attn_values,mlp,kv_extra,embed_head\n";
  for (const auto& st : fb.steps) {
    for (std::size_t l = 0; l < st.layers.size(); ++l) {
      const auto& lf = st.layers[l];
      os << st.s << ',' << l << ',' << num(lf.projections) << ',' << num(lf.attn_scores) << ',' << num(lf.attn_values)
         << ',' << num(lf.mlp) << ',' << num(lf.kv_extra) << ",0\n";
    }
    os << st.s << ",-1,0,0,0,0,0," << num(st.embed_head) << '\n';
  }
  return os.str();
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

struct Frame {
  double w = 480, h = 320, left = 60, right = 20, top = 30, bottom = 45;
  double x0, x1, y0, y1;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

inline void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.h - f.bottom << "\" x2=\"" << f.w - f.right << "\" y2=\""
     << f.h - f.bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\"" << f.h - f.bottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << f.w / 2 << "\" y=\"" << f.h - 8 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"14\" y=\"" << f.h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << f.h / 2 << ")\">"
     << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << f.left - 4 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

}  // namespace detail

inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel) {
  detail::Frame f;
  f.x0 = f.y0 = 1e300;
  f.x1 = f.y1 = -1e300;
  for (const auto& s : series) {
    for (double x : s.x) f.x0 = std::min(f.x0, x), f.x1 = std::max(f.x1, x);
    for (double y : s.y) f.y0 = std::min(f.y0, y), f.y1 = std::max(f.y1, y);
  }
  if (!(f.x1 > f.x0)) f.x1 = f.x0 + 1;
  f.y0 = std::min(f.y0, 0.0);
  if (!(f.y1 > f.y0)) f.y1 = f.y0 + 1;
  std::ostringstream os;
  detail::axes(os, f, title, xlabel, ylabel);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    os << "<polyline fill=\"none\" stroke=\"" << detail::color(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) os << num(f.px(s.x[k])) << ',' << num(f.py(s.y[k])) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << f.w - f.right - 4 << "\" y=\"" << f.top + 14 * (i + 1) << "\" text-anchor=\"end\" fill=\""
       << detail::color(i) << "\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values,
                             const std::string& title, const std::string& ylabel) {
  detail::Frame f;
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(1, values.size()));
  f.y0 = 0;
  f.y1 = 0;
  for (double v : values) f.y1 = std::max(f.y1, v);
  if (!(f.y1 > 0)) f.y1 = 1;
  std::ostringstream os;
  detail::axes(os, f, title, "", ylabel);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double xa = f.px(static_cast<double>(i) + 0.15);
    const double xb = f.px(static_cast<double>(i) + 0.85);
    os << "<rect x=\"" << num(xa) << "\" y=\"" << num(f.py(values[i])) << "\" width=\"" << num(xb - xa)
       << "\" height=\"" << num(f.py(0) - f.py(values[i])) << "\" fill=\"" << detail::color(0) << "\"/>\n";
    os << "<text x=\"" << num((xa + xb) / 2) << "\" y=\"" << f.h - f.bottom + 14 << "\" text-anchor=\"middle\">"
       << labels[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// History share (all inputs except the current block) per (layer, step).
inline std::string attention_svg(const AttentionReport& r) {
  std::vector<std::string> labels;
  std::vector<double> values;
  for (std::size_t l = 0; l < r.L; ++l)
    for (std::size_t s = r.S; s >= 1; --s) {
      labels.push_back("L" + std::to_string(l) + "s" + std::to_string(s));
      values.push_back(r.history(l, s));
    }
  return bar_chart(labels, values, "attention on history inputs", "score");
}

inline std::string exposure_svg(const std::vector<std::pair<std::string, std::vector<double>>>& endpoint_by_k) {
  std::vector<Series> series;
  for (const auto& [name, ys] : endpoint_by_k) {
    Series s{name, {}, ys};
    for (std::size_t k = 0; k < ys.size(); ++k) s.x.push_back(static_cast<double>(k));
    series.push_back(std::move(s));
  }
  return line_chart(series, "endpoint error vs teacher-solved prefix", "k", "mse");
}

inline std::string flops_svg(const FlopsBreakdown& fb) {
  return bar_chart({"proj", "scores", "values", "mlp", "embed/head", "kv-extra"},
                   {gflops(fb.projections()), gflops(fb.attn_scores()), gflops(fb.attn_values()), gflops(fb.mlp()),
                    gflops(fb.embed_head()), gflops(fb.kv_extra())},
                   "inference cost by part", "GFLOPs (MACs)");
}

}  // namespace ard::report
