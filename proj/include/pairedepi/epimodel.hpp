#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pairedepi/errors.hpp"

namespace pairedepi {

/// Validation cap on per-day rates; guards optimizer and sampler excursions.
inline constexpr double kMaxRatePerDay = 1e3;
/// Default fixed RK4 step in days.
inline constexpr double kDefaultStep = 0.1;
/// Absolute tolerance on simplex mass conservation.
inline constexpr double kSimplexTol = 1e-9;

enum class ModelKind { kSir, kSibr };

/// Susceptible-infectious-recovered rates, per day.
struct SirParams {
  double beta = 0.0;   ///< transmission rate
  double gamma = 0.0;  ///< recovery rate
  void validate() const;
};

/// SIBR splits recovery into a broadly-recovered stage (antibodies present,
/// pathogen material still detectable) and a fully-recovered stage.
struct SibrParams {
  double beta = 0.0;   ///< transmission rate
  double gamma = 0.0;  ///< broad-recovery rate (leaves infectious)
  double eta = 0.0;    ///< full-recovery rate (leaves broadly recovered)
  void validate() const;
};

using ModelParams = std::variant<SirParams, SibrParams>;

ModelKind model_kind(const ModelParams& params);
int num_compartments(ModelKind kind);
const std::vector<std::string>& compartment_labels(ModelKind kind);
void validate_params(const ModelParams& params);

/// Population proportions over the model compartments, with their labels.
struct CompartmentState {
  std::vector<double> proportions;
  std::vector<std::string> labels;
  /// Checks entries in [0,1] and total mass 1 within kSimplexTol.
  void validate() const;
};

CompartmentState make_state(ModelKind kind, std::vector<double> proportions);

/// (ds, di, dr) = (-beta*s*i, beta*s*i - gamma*i, gamma*i)
std::array<double, 3> sir_derivative(std::span<const double> state, const SirParams& params);

/// (ds, di, db, dr) = (-beta*s*i, beta*s*i - gamma*i, gamma*i - eta*b, eta*b)
std::array<double, 4> sibr_derivative(std::span<const double> state, const SibrParams& params);

/// Deterministic epidemic path on a uniform time grid.
class Trajectory {
 public:
  Trajectory(ModelParams model, std::vector<double> grid, std::vector<double> states_flat);

  const ModelParams& model() const { return model_; }
  ModelKind kind() const { return model_kind(model_); }
  double t0() const { return grid_.front(); }
  double t_end() const { return grid_.back(); }
  std::span<const double> grid() const { return grid_; }
  std::size_t size() const { return grid_.size(); }
  int num_compartments() const { return comps_; }
  const std::vector<std::string>& labels() const;

  std::span<const double> state_row(std::size_t k) const;

  /// Linear interpolation between neighboring grid states, renormalized to
  /// the simplex; exact at grid points. Throws OutOfRangeError outside
  /// [t0, t_end].
  CompartmentState state_at(double tau) const;
  void state_at(double tau, std::span<double> out) const;

  /// Verifies the spec invariants (simplex rows, monotone s and terminal
  /// compartment); throws InvalidInputError on violation.
  void validate() const;

  /// CSV with header `time,<labels...>`, full double precision.
  std::string to_csv() const;

 private:
  ModelParams model_;
  int comps_;
  std::vector<double> grid_;
  std::vector<double> states_;  // row-major, size() x comps_
};

/// Classical fixed-step RK4 from t0 to t_end. Each step clamps negative
/// round-off (>= -1e-12) to zero and renormalizes; larger violations throw
/// IntegrationInstabilityError.
Trajectory integrate(const ModelParams& params, const CompartmentState& init, double t0,
                     double t_end, double step = kDefaultStep);

/// States at the given probe times without materializing the full grid.
/// probe_times must be ascending and inside [t0, t_end]; out receives
/// probe_times.size() x C values, identical to integrate(...).state_at(...).
void integrate_at(const ModelParams& params, std::span<const double> init, double t0,
                  double t_end, double step, std::span<const double> probe_times,
                  std::span<double> out);

double r0(const SirParams& params);
double r0(const SibrParams& params);
double r0(const ModelParams& params);

}  // namespace pairedepi
