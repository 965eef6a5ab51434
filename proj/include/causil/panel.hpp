#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "causil/graph.hpp"

namespace causil {

/// One active instance of a service at one timestamp. Values are indexed by
/// category_index(); categories the service does not report hold NaN.
struct InstanceObservation {
  int instance = 0;
  std::array<double, kNumCategories> values{};
};

/// Instance-level telemetry indexed by (service, timestamp). The observations
/// present at (s, t) are exactly the active instances there, so the
/// active-instance count R_t is the size of that slice.
class MetricPanel {
 public:
  MetricPanel() = default;
  MetricPanel(int n_services, int n_timestamps);

  int n_services() const { return n_services_; }
  int n_timestamps() const { return n_timestamps_; }

  /// Instances within one (service, t) slice must be added in increasing id.
  void add(int service, int t, InstanceObservation obs);
  std::span<const InstanceObservation> at(int service, int t) const;
  int active_count(int service, int t) const { return static_cast<int>(at(service, t).size()); }
  /// Σ_t R_t for the service.
  std::size_t row_count(int service) const;

  bool has_category(int service, MetricCategory c) const;
  void set_category_present(int service, MetricCategory c, bool present);

  /// Number of CSV records (one per present category per observation).
  std::size_t record_count() const;

 private:
  std::size_t slot(int service, int t) const;

  int n_services_ = 0;
  int n_timestamps_ = 0;
  std::vector<std::vector<InstanceObservation>> slices_;
  std::vector<std::array<bool, kNumCategories>> present_;
};

// Panel CSV: header `service,category,instance,t,value`, categories spelled
// workload/cpu/mem/latency/error. Written sorted by (service, t, instance,
// category) with shortest round-trip number formatting.
void write_panel_csv(const MetricPanel& panel, std::ostream& out);
void write_panel_csv(const MetricPanel& panel, const std::string& path);
/// Throws ParseError on malformed rows or when an instance reports only some
/// of its service's categories.
MetricPanel read_panel_csv(std::istream& in);
MetricPanel read_panel_csv(const std::string& path);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

}  // namespace causil
