#include "pairedepi/epimodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pairedepi/csvio.hpp"

namespace pairedepi {

namespace {

// Negative round-off absorbed by the post-step projection.
constexpr double kNegClampTol = 1e-12;

void check_rate(double value, const char* name) {
  if (!std::isfinite(value) || value <= 0.0) {
    throw InvalidInputError(std::string(name) + " must be a finite positive rate");
  }
  if (value > kMaxRatePerDay) {
    throw InvalidInputError(std::string(name) + " exceeds the 1e3/day validation cap");
  }
}

const std::vector<std::string> kSirLabels = {"s", "i", "r"};
const std::vector<std::string> kSibrLabels = {"s", "i", "b", "r"};

}  // namespace

void SirParams::validate() const {
  check_rate(beta, "beta");
  check_rate(gamma, "gamma");
}

void SibrParams::validate() const {
  check_rate(beta, "beta");
  check_rate(gamma, "gamma");
  check_rate(eta, "eta");
}

ModelKind model_kind(const ModelParams& params) {
  return std::holds_alternative<SirParams>(params) ? ModelKind::kSir : ModelKind::kSibr;
}

int num_compartments(ModelKind kind) { return kind == ModelKind::kSir ? 3 : 4; }

const std::vector<std::string>& compartment_labels(ModelKind kind) {
  return kind == ModelKind::kSir ? kSirLabels : kSibrLabels;
}

void validate_params(const ModelParams& params) {
  std::visit([](const auto& p) { p.validate(); }, params);
}

void CompartmentState::validate() const {
  if (proportions.size() != labels.size()) {
    throw InvalidInputError("state has " + std::to_string(proportions.size()) +
                            " proportions but " + std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (double p : proportions) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InvalidInputError("compartment proportion outside [0,1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTol) {
    throw InvalidInputError("compartment proportions sum to " + fmt_double(total) +
                            ", expected 1");
  }
}

CompartmentState make_state(ModelKind kind, std::vector<double> proportions) {
  CompartmentState state{std::move(proportions), compartment_labels(kind)};
  state.validate();
  return state;
}

namespace {

void check_state_finite(std::span<const double> state) {
  for (double x : state) {
    if (!std::isfinite(x)) throw InvalidInputError("non-finite compartment state");
  }
}

inline void deriv(const SirParams& p, const double* y, double* dy) {
  const double flow_in = p.beta * y[0] * y[1];
  const double flow_out = p.gamma * y[1];
  dy[0] = -flow_in;
  dy[1] = flow_in - flow_out;
  dy[2] = flow_out;
}

inline void deriv(const SibrParams& p, const double* y, double* dy) {
  const double flow_in = p.beta * y[0] * y[1];
  const double flow_broad = p.gamma * y[1];
  const double flow_full = p.eta * y[2];
  dy[0] = -flow_in;
  dy[1] = flow_in - flow_broad;
  dy[2] = flow_broad - flow_full;
  dy[3] = flow_full;
}

// One RK4 step followed by the simplex projection.
template <class Params, int C>
void rk4_step(const Params& p, double h, std::array<double, C>& y) {
  std::array<double, C> k1, k2, k3, k4, tmp;
  deriv(p, y.data(), k1.data());
  for (int c = 0; c < C; ++c) tmp[c] = y[c] + 0.5 * h * k1[c];
  deriv(p, tmp.data(), k2.data());
  for (int c = 0; c < C; ++c) tmp[c] = y[c] + 0.5 * h * k2[c];
  deriv(p, tmp.data(), k3.data());
  for (int c = 0; c < C; ++c) tmp[c] = y[c] + h * k3[c];
  deriv(p, tmp.data(), k4.data());
  for (int c = 0; c < C; ++c) {
    y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
  }

  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    if (!std::isfinite(y[c]) || y[c] < -kNegClampTol || y[c] > 1.0 + kNegClampTol) {
      throw IntegrationInstabilityError(
          "integration left the simplex; reduce the step or the rates");
    }
    if (y[c] < 0.0) y[c] = 0.0;
    total += y[c];
  }
  for (int c = 0; c < C; ++c) y[c] /= total;
}

// Shared stepping loop. emit(t, y) is called for the initial state and after
// every accepted step, in time order.
template <class Params, int C, class Emit>
void run_rk4(const Params& p, std::span<const double> init, double t0, double t_end,
             double step, Emit&& emit) {
  std::array<double, C> y{};
  std::copy(init.begin(), init.end(), y.begin());
  emit(t0, y);
  const double span = t_end - t0;
  const auto n_steps = static_cast<long>(std::ceil(span / step - 1e-9));
  double t = t0;
  for (long k = 0; k < n_steps; ++k) {
    const double next = (k + 1 == n_steps) ? t_end : t0 + (k + 1) * step;
    rk4_step<Params, C>(p, next - t, y);
    t = next;
    emit(t, y);
  }
}

template <class Emit>
void run_model(const ModelParams& params, std::span<const double> init, double t0,
               double t_end, double step, Emit&& emit) {
  if (const auto* sir = std::get_if<SirParams>(&params)) {
    run_rk4<SirParams, 3>(*sir, init, t0, t_end, step, emit);
  } else {
    run_rk4<SibrParams, 4>(std::get<SibrParams>(params), init, t0, t_end, step, emit);
  }
}

void check_integrate_args(const ModelParams& params, std::span<const double> init,
                          double t0, double t_end, double step) {
  validate_params(params);
  if (!(t_end > t0)) throw InvalidInputError("t_end must exceed t0");
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInputError("step must be positive");
  if (static_cast<int>(init.size()) != num_compartments(model_kind(params))) {
    throw InvalidInputError("initial state size does not match the model");
  }
  check_state_finite(init);
}

void interpolate_simplex(std::span<const double> lo, std::span<const double> hi, double w,
                         std::span<double> out) {
  double total = 0.0;
  for (std::size_t c = 0; c < lo.size(); ++c) {
    out[c] = (1.0 - w) * lo[c] + w * hi[c];
    total += out[c];
  }
  for (std::size_t c = 0; c < lo.size(); ++c) out[c] /= total;
}

}  // namespace

std::array<double, 3> sir_derivative(std::span<const double> state, const SirParams& params) {
  params.validate();
  if (state.size() != 3) throw InvalidInputError("sir state must have 3 compartments");
  check_state_finite(state);
  std::array<double, 3> dy{};
  deriv(params, state.data(), dy.data());
  return dy;
}

std::array<double, 4> sibr_derivative(std::span<const double> state, const SibrParams& params) {
  params.validate();
  if (state.size() != 4) throw InvalidInputError("sibr state must have 4 compartments");
  check_state_finite(state);
  std::array<double, 4> dy{};
  deriv(params, state.data(), dy.data());
  return dy;
}

Trajectory::Trajectory(ModelParams model, std::vector<double> grid,
                       std::vector<double> states_flat)
    : model_(std::move(model)),
      comps_(pairedepi::num_compartments(model_kind(model_))),
      grid_(std::move(grid)),
      states_(std::move(states_flat)) {
  if (grid_.empty() || states_.size() != grid_.size() * static_cast<std::size_t>(comps_)) {
    throw InvalidInputError("trajectory grid and state sizes disagree");
  }
  for (std::size_t k = 1; k < grid_.size(); ++k) {
    if (!(grid_[k] > grid_[k - 1])) {
      throw InvalidInputError("trajectory grid must be strictly increasing");
    }
  }
}

const std::vector<std::string>& Trajectory::labels() const {
  return compartment_labels(kind());
}

std::span<const double> Trajectory::state_row(std::size_t k) const {
  return {states_.data() + k * comps_, static_cast<std::size_t>(comps_)};
}

void Trajectory::state_at(double tau, std::span<double> out) const {
  if (tau < t0() || tau > t_end()) {
    throw OutOfRangeError("time " + fmt_double(tau) + " outside trajectory [" +
                          fmt_double(t0()) + ", " + fmt_double(t_end()) + "]");
  }
  const auto it = std::lower_bound(grid_.begin(), grid_.end(), tau);
  const auto hi = static_cast<std::size_t>(it - grid_.begin());
  if (hi == 0 || grid_[hi] == tau) {
    const auto row = state_row(hi);
    std::copy(row.begin(), row.end(), out.begin());
    return;
  }
  const std::size_t lo = hi - 1;
  const double w = (tau - grid_[lo]) / (grid_[hi] - grid_[lo]);
  interpolate_simplex(state_row(lo), state_row(hi), w, out);
}

CompartmentState Trajectory::state_at(double tau) const {
  CompartmentState state{std::vector<double>(static_cast<std::size_t>(comps_)), labels()};
  state_at(tau, state.proportions);
  return state;
}

void Trajectory::validate() const {
  // renormalization noise allowance on monotone components
  constexpr double kSlack = 1e-12;
  for (std::size_t k = 0; k < size(); ++k) {
    CompartmentState row{std::vector<double>(state_row(k).begin(), state_row(k).end()),
                         labels()};
    row.validate();
    if (k > 0) {
      if (state_row(k)[0] > state_row(k - 1)[0] + kSlack) {
        throw InvalidInputError("susceptible proportion increased along the grid");
      }
      const int last = comps_ - 1;
      if (state_row(k)[last] < state_row(k - 1)[last] - kSlack) {
        throw InvalidInputError("terminal compartment decreased along the grid");
      }
    }
  }
}

std::string Trajectory::to_csv() const {
  std::ostringstream out;
  out << "time";
  for (const auto& label : labels()) out << ',' << label;
  out << '\n';
  for (std::size_t k = 0; k < size(); ++k) {
    out << fmt_double(grid_[k]);
    for (double x : state_row(k)) out << ',' << fmt_double(x);
    out << '\n';
  }
  return out.str();
}

Trajectory integrate(const ModelParams& params, const CompartmentState& init, double t0,
                     double t_end, double step) {
  init.validate();
  check_integrate_args(params, init.proportions, t0, t_end, step);
  std::vector<double> grid;
  std::vector<double> states;
  const auto expected = static_cast<std::size_t>(std::ceil((t_end - t0) / step)) + 2;
  grid.reserve(expected);
  states.reserve(expected * init.proportions.size());
  run_model(params, init.proportions, t0, t_end, step, [&](double t, const auto& y) {
    grid.push_back(t);
    states.insert(states.end(), y.begin(), y.end());
  });
  return Trajectory(params, std::move(grid), std::move(states));
}

void integrate_at(const ModelParams& params, std::span<const double> init, double t0,
                  double t_end, double step, std::span<const double> probe_times,
                  std::span<double> out) {
  check_integrate_args(params, init, t0, t_end, step);
  const auto comps = init.size();
  if (out.size() != probe_times.size() * comps) {
    throw InvalidInputError("probe output buffer has the wrong size");
  }
  for (std::size_t k = 0; k < probe_times.size(); ++k) {
    if (probe_times[k] < t0 || probe_times[k] > t_end ||
        (k > 0 && probe_times[k] < probe_times[k - 1])) {
      throw OutOfRangeError("probe times must be ascending within [t0, t_end]");
    }
  }

  std::array<double, 4> prev{};
  double prev_t = t0;
  std::size_t next_probe = 0;
  bool first = true;
  run_model(params, init, t0, t_end, step, [&](double t, const auto& y) {
    if (!first) {
      while (next_probe < probe_times.size() && probe_times[next_probe] <= t) {
        const double tau = probe_times[next_probe];
        auto dst = out.subspan(next_probe * comps, comps);
        if (tau == t) {
          std::copy(y.begin(), y.end(), dst.begin());
        } else {
          const double w = (tau - prev_t) / (t - prev_t);
          interpolate_simplex(std::span<const double>(prev.data(), comps),
                              std::span<const double>(y.data(), comps), w, dst);
        }
        ++next_probe;
      }
    } else {
      while (next_probe < probe_times.size() && probe_times[next_probe] <= t) {
        auto dst = out.subspan(next_probe * comps, comps);
        std::copy(y.begin(), y.end(), dst.begin());
        ++next_probe;
      }
      first = false;
    }
    std::copy(y.begin(), y.end(), prev.begin());
    prev_t = t;
  });
}

double r0(const SirParams& params) {
  params.validate();
  return params.beta / params.gamma;
}

double r0(const SibrParams& params) {
  params.validate();
  return params.beta / params.gamma;
}

double r0(const ModelParams& params) {
  return std::visit([](const auto& p) { return r0(p); }, params);
}

}  // namespace pairedepi
