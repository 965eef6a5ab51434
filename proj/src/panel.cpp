#include "causil/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "causil/error.hpp"

namespace causil {

MetricPanel::MetricPanel(int n_services, int n_timestamps)
    : n_services_(n_services), n_timestamps_(n_timestamps) {
  if (n_services < 0 || n_timestamps < 0) throw InvalidConfig("negative panel dimensions");
  slices_.resize(static_cast<std::size_t>(n_services) * static_cast<std::size_t>(n_timestamps));
  std::array<bool, kNumCategories> all{};
  all.fill(true);
  present_.assign(static_cast<std::size_t>(n_services), all);
}

std::size_t MetricPanel::slot(int service, int t) const {
  if (service < 0 || service >= n_services_ || t < 0 || t >= n_timestamps_) {
    throw std::out_of_range("panel index (" + std::to_string(service) + ", " + std::to_string(t) +
                            ") out of range");
  }
  return static_cast<std::size_t>(service) * static_cast<std::size_t>(n_timestamps_) +
         static_cast<std::size_t>(t);
}

void MetricPanel::add(int service, int t, InstanceObservation obs) {
  auto& slice = slices_[slot(service, t)];
  if (!slice.empty() && slice.back().instance >= obs.instance) {
    throw std::invalid_argument("instances must be added in increasing id order");
  }
  slice.push_back(obs);
}

std::span<const InstanceObservation> MetricPanel::at(int service, int t) const {
  return slices_[slot(service, t)];
}

std::size_t MetricPanel::row_count(int service) const {
  std::size_t n = 0;
  for (int t = 0; t < n_timestamps_; ++t) n += at(service, t).size();
  return n;
}

bool MetricPanel::has_category(int service, MetricCategory c) const {
  return present_.at(static_cast<std::size_t>(service))[category_index(c)];
}

void MetricPanel::set_category_present(int service, MetricCategory c, bool present) {
  present_.at(static_cast<std::size_t>(service))[category_index(c)] = present;
}

std::size_t MetricPanel::record_count() const {
  std::size_t n = 0;
  for (int s = 0; s < n_services_; ++s) {
    std::size_t cats = 0;
    for (auto c : kAllCategories) cats += has_category(s, c);
    n += cats * row_count(s);
  }
  return n;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_panel_csv(const MetricPanel& panel, std::ostream& out) {
  out << "service,category,instance,t,value\n";
  for (int s = 0; s < panel.n_services(); ++s) {
    for (int t = 0; t < panel.n_timestamps(); ++t) {
      for (const auto& obs : panel.at(s, t)) {
        for (auto c : kAllCategories) {
          if (!panel.has_category(s, c)) continue;
          out << s << ',' << category_short_name(c) << ',' << obs.instance << ',' << t << ','
              << format_double(obs.values[category_index(c)]) << '\n';
        }
      }
    }
  }
}

void write_panel_csv(const MetricPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_panel_csv(panel, out);
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

MetricPanel read_panel_csv(std::istream& in) {
  struct Pending {
    std::array<double, kNumCategories> values;
    std::array<bool, kNumCategories> seen{};
  };
  std::map<std::tuple<int, int, int>, Pending> records;  // (service, t, instance)
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty panel file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "service,category,instance,t,value") throw ParseError("unexpected panel header: " + line);

  int max_service = -1;
  int max_t = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string_view, 5> fields;
    std::string_view rest(line);
    for (std::size_t i = 0; i < 5; ++i) {
      auto comma = rest.find(',');
      if ((i < 4) == (comma == std::string_view::npos)) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields");
      }
      fields[i] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    const int service = parse_number<int>(fields[0], line_no);
    const auto category = parse_category(fields[1]);
    const int instance = parse_number<int>(fields[2], line_no);
    const int t = parse_number<int>(fields[3], line_no);
    const double value = parse_number<double>(fields[4], line_no);
    if (service < 0 || t < 0) throw ParseError("line " + std::to_string(line_no) + ": negative index");
    auto& rec = records[{service, t, instance}];
    if (rec.seen[category_index(category)]) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate record");
    }
    rec.seen[category_index(category)] = true;
    rec.values[category_index(category)] = value;
    max_service = std::max(max_service, service);
    max_t = std::max(max_t, t);
  }

  MetricPanel panel(max_service + 1, max_t + 1);
  std::vector<std::array<bool, kNumCategories>> present(static_cast<std::size_t>(max_service + 1));
  for (const auto& [key, rec] : records) {
    auto& p = present[static_cast<std::size_t>(std::get<0>(key))];
    for (std::size_t c = 0; c < kNumCategories; ++c) p[c] = p[c] || rec.seen[c];
  }
  for (int s = 0; s <= max_service; ++s) {
    for (auto c : kAllCategories) {
      panel.set_category_present(s, c, present[static_cast<std::size_t>(s)][category_index(c)]);
    }
  }
  for (const auto& [key, rec] : records) {
    const auto& [service, t, instance] = key;
    InstanceObservation obs{instance, {}};
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      if (present[static_cast<std::size_t>(service)][c] && !rec.seen[c]) {
        throw ParseError("service " + std::to_string(service) + " instance " + std::to_string(instance) +
                         " at t=" + std::to_string(t) + " lacks category " +
                         std::string(category_short_name(kAllCategories[c])));
      }
      obs.values[c] = rec.seen[c] ? rec.values[c] : std::numeric_limits<double>::quiet_NaN();
    }
    panel.add(service, t, obs);
  }
  return panel;
}

MetricPanel read_panel_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return read_panel_csv(in);
}

}  // namespace causil
