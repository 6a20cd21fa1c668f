#include "dtanma/figures.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dtanma {

namespace {

struct Frame {
  double width = 640, height = 480;
  double ml = 70, mr = 20, mt = 30, mb = 55;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool log_x = false;

  double tx(double x) const {
    const double a = log_x ? std::log(x) : x;
    const double lo = log_x ? std::log(x0) : x0;
    const double hi = log_x ? std::log(x1) : x1;
    return ml + (a - lo) / (hi - lo) * (width - ml - mr);
  }
  double ty(double y) const {
    return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb);
  }
};

std::string polyline(const Frame& f, const std::vector<std::pair<double, double>>& pts,
                     const std::string& color, double width, const std::string& dash = "") {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << '"';
  if (!dash.empty()) os << " stroke-dasharray=\"" << dash << '"';
  os << " points=\"";
  for (const auto& [x, y] : pts) os << f.tx(x) << ',' << f.ty(y) << ' ';
  os << "\"/>\n";
  return os.str();
}

std::string band(const Frame& f, const std::vector<std::pair<double, double>>& upper,
                 const std::vector<std::pair<double, double>>& lower,
                 const std::string& color) {
  std::ostringstream os;
  os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (const auto& [x, y] : upper) os << f.tx(x) << ',' << f.ty(y) << ' ';
  for (auto it = lower.rbegin(); it != lower.rend(); ++it)
    os << f.tx(it->first) << ',' << f.ty(it->second) << ' ';
  os << "\"/>\n";
  return os.str();
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel,
                 const std::string& title) {
  std::ostringstream os;
  os.precision(4);
  os << "<rect x=\"" << f.ml << "\" y=\"" << f.mt << "\" width=\"" << f.width - f.ml - f.mr
     << "\" height=\"" << f.height - f.mt - f.mb
     << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fr = i / 4.0;
    const double y = f.y0 + fr * (f.y1 - f.y0);
    os << "<text x=\"" << f.ml - 8 << "\" y=\"" << f.ty(y) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << y << "</text>\n";
    os << "<line x1=\"" << f.ml - 4 << "\" y1=\"" << f.ty(y) << "\" x2=\"" << f.ml
       << "\" y2=\"" << f.ty(y) << "\" stroke=\"#333\"/>\n";
    double xv;
    if (f.log_x) {
      xv = std::exp(std::log(f.x0) + fr * (std::log(f.x1) - std::log(f.x0)));
    } else {
      xv = f.x0 + fr * (f.x1 - f.x0);
    }
    os << "<text x=\"" << f.tx(xv) << "\" y=\"" << f.height - f.mb + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << xv << "</text>\n";
    os << "<line x1=\"" << f.tx(xv) << "\" y1=\"" << f.height - f.mb << "\" x2=\""
       << f.tx(xv) << "\" y2=\"" << f.height - f.mb + 4 << "\" stroke=\"#333\"/>\n";
  }
  os << "<text x=\"" << (f.ml + f.width - f.mr) / 2 << "\" y=\"" << f.height - 12
     << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (f.mt + f.height - f.mb) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << (f.mt + f.height - f.mb) / 2 << ")\">" << ylabel << "</text>\n";
  os << "<text x=\"" << f.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  return os.str();
}

std::string document(const Frame& f, const std::string& body, const std::string& data_csv) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
     << f.height << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n"
     << "<metadata><![CDATA[\n"
     << data_csv << "]]></metadata>\n"
     << body << "</svg>\n";
  return os.str();
}

}  // namespace

std::string threshold_curve_svg(const ThresholdCurve& curve) {
  Frame f;
  f.log_x = true;
  f.x0 = curve.grid.front();
  f.x1 = curve.grid.back();
  f.y0 = 0.0;
  f.y1 = 1.0;

  std::vector<std::pair<double, double>> sens_med, sens_lo, sens_hi, fpf_med, fpf_lo, fpf_hi;
  std::ostringstream csv;
  csv.precision(10);
  csv << "threshold,sens_median,sens_lower,sens_upper,fpf_median,fpf_lower,fpf_upper\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    const auto& p = curve.points[i];
    const double x = curve.grid[i];
    sens_med.emplace_back(x, p.sensitivity.median);
    sens_lo.emplace_back(x, p.sensitivity.lower);
    sens_hi.emplace_back(x, p.sensitivity.upper);
    fpf_med.emplace_back(x, p.fpf.median);
    fpf_lo.emplace_back(x, p.fpf.lower);
    fpf_hi.emplace_back(x, p.fpf.upper);
    csv << x << ',' << p.sensitivity.median << ',' << p.sensitivity.lower << ','
        << p.sensitivity.upper << ',' << p.fpf.median << ',' << p.fpf.lower << ','
        << p.fpf.upper << '\n';
  }

  std::ostringstream body;
  body << axes(f, "threshold", "probability", curve.test_id + ": accuracy vs threshold");
  body << band(f, sens_hi, sens_lo, "#1f77b4");
  body << polyline(f, sens_med, "#1f77b4", 2);
  body << band(f, fpf_hi, fpf_lo, "#d62728");
  body << polyline(f, fpf_med, "#d62728", 2);
  body << "<text x=\"" << f.width - 170 << "\" y=\"40\" font-size=\"12\" fill=\"#1f77b4\">"
       << "sensitivity</text>\n";
  body << "<text x=\"" << f.width - 170 << "\" y=\"56\" font-size=\"12\" fill=\"#d62728\">"
       << "FPF (1 - specificity)</text>\n";
  return document(f, body.str(), csv.str());
}

std::string sroc_svg(const SrocCurve& curve, const AccuracySummary& pooled) {
  Frame f;
  f.x0 = 0.0;
  f.x1 = 1.0;
  f.y0 = 0.0;
  f.y1 = 1.0;

  std::ostringstream csv;
  csv.precision(10);
  csv << "fpf,sens_median,sens_lower,sens_upper\n";
  std::vector<std::pair<double, double>> med, lo, hi;
  for (const auto& p : curve.points) {
    med.emplace_back(p.fpf, p.sensitivity.median);
    lo.emplace_back(p.fpf, p.sensitivity.lower);
    hi.emplace_back(p.fpf, p.sensitivity.upper);
    csv << p.fpf << ',' << p.sensitivity.median << ',' << p.sensitivity.lower << ','
        << p.sensitivity.upper << '\n';
  }
  csv << "ellipse_center_logit," << curve.ellipse.center_x << ',' << curve.ellipse.center_y
      << "\nellipse_axes," << curve.ellipse.axis1 << ',' << curve.ellipse.axis2
      << "\nellipse_angle," << curve.ellipse.angle << '\n';
  csv << "pooled_point," << pooled.fpf.median << ',' << pooled.sensitivity.median << '\n';

  std::ostringstream body;
  body << axes(f, "false positive fraction", "sensitivity", curve.test_id + ": summary ROC");
  body << "<line x1=\"" << f.tx(0.0) << "\" y1=\"" << f.ty(0.0) << "\" x2=\"" << f.tx(1.0)
       << "\" y2=\"" << f.ty(1.0) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  if (curve.curve_available && !curve.points.empty()) {
    body << band(f, hi, lo, "#2ca02c");
    body << polyline(f, med, "#2ca02c", 2);
  }
  if (!curve.ellipse.polygon.empty())
    body << polyline(f, curve.ellipse.polygon, "#9467bd", 1.5, "5 3");
  body << "<circle cx=\"" << f.tx(pooled.fpf.median) << "\" cy=\""
       << f.ty(pooled.sensitivity.median) << "\" r=\"4\" fill=\"#9467bd\"/>\n";
  if (!curve.flag.empty())
    body << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 36
         << "\" text-anchor=\"middle\" font-size=\"11\" fill=\"#d62728\">" << curve.flag
         << "</text>\n";
  return document(f, body.str(), csv.str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failure: " + path);
}

}  // namespace dtanma
