#include "pcasgd/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pcasgd {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

void append_vector(std::ostream& os, const Eigen::VectorXd& v) {
  for (int k = 0; k < v.size(); ++k) os << ',' << format_double(v(k));
}

Eigen::VectorXd take_vector(const std::vector<std::string>& cells, std::size_t& pos, int d) {
  Eigen::VectorXd v(d);
  for (int k = 0; k < d; ++k) v(k) = to_double(cells.at(pos++));
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const MetricsTrace& trace) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace.rows) {
    os << r.t << ',' << format_double(r.loss) << ',' << format_double(r.grad_sq_norm) << ','
       << format_double(r.consensus_dev) << ',' << format_double(r.theta) << ','
       << r.pv_pred_count << '\n';
  }
}

std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader) {
    throw std::runtime_error("trace CSV header mismatch");
  }
  std::vector<TraceRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 6) throw std::runtime_error("trace CSV row has wrong column count");
    rows.push_back({to_int(c[0]), to_double(c[1]), to_double(c[2]), to_double(c[3]),
                    to_double(c[4]), to_int(c[5])});
  }
  return rows;
}

void write_steps_csv(std::ostream& os, const MetricsTrace& trace) {
  int d = 0;
  if (!trace.steps.empty() && !trace.steps[0].agents.empty()) {
    d = static_cast<int>(trace.steps[0].agents[0].x.size());
  }
  os << "t,agent,theta,choice,g_norm,gdc_term_norm,gdc_sq_norm";
  for (const char* name : {"x", "x_pre", "x_cli", "x_next", "g"}) {
    for (int k = 0; k < d; ++k) os << ',' << name << '_' << k;
  }
  os << '\n';
  for (const auto& step : trace.steps) {
    for (const auto& a : step.agents) {
      os << step.t << ',' << a.agent + 1 << ',' << format_double(a.theta) << ','
         << to_string(a.choice) << ',' << format_double(a.g_norm) << ','
         << format_double(a.gdc_term_norm) << ',' << format_double(a.gdc_sq_norm);
      append_vector(os, a.x);
      append_vector(os, a.x_pre);
      append_vector(os, a.x_cli);
      append_vector(os, a.x_next);
      append_vector(os, a.g);
      os << '\n';
    }
  }
}

std::vector<StepRecord> read_steps_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty steps CSV");
  const auto header = split(line, ',');
  constexpr std::size_t kFixed = 7;
  if (header.size() < kFixed || header[0] != "t" || header[3] != "choice" ||
      (header.size() - kFixed) % 5 != 0) {
    throw std::runtime_error("steps CSV header mismatch");
  }
  const int d = static_cast<int>((header.size() - kFixed) / 5);
  std::vector<StepRecord> steps;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != header.size()) throw std::runtime_error("steps CSV row has wrong column count");
    const int t = to_int(c[0]);
    if (steps.empty() || steps.back().t != t) steps.push_back({t, {}});
    AgentStep a;
    a.agent = to_int(c[1]) - 1;
    a.theta = to_double(c[2]);
    if (c[3] == "predicting") {
      a.choice = PvChoice::predicting;
    } else if (c[3] == "clipping") {
      a.choice = PvChoice::clipping;
    } else {
      throw std::runtime_error("bad choice '" + c[3] + "'");
    }
    a.g_norm = to_double(c[4]);
    a.gdc_term_norm = to_double(c[5]);
    a.gdc_sq_norm = to_double(c[6]);
    std::size_t pos = kFixed;
    a.x = take_vector(c, pos, d);
    a.x_pre = take_vector(c, pos, d);
    a.x_cli = take_vector(c, pos, d);
    a.x_next = take_vector(c, pos, d);
    a.g = take_vector(c, pos, d);
    steps.back().agents.push_back(std::move(a));
  }
  return steps;
}

std::filesystem::path steps_path_for(const std::filesystem::path& trace_csv) {
  auto p = trace_csv;
  p.replace_extension(".steps.csv");
  return p;
}

std::filesystem::path report_path_for(const std::filesystem::path& trace_csv) {
  auto p = trace_csv;
  p.replace_extension(".bounds.txt");
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace pcasgd
