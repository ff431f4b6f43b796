#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metastab/chain.hpp"
#include "metastab/metastability.hpp"

namespace metastab {

/// Largest composition or lattice space a generator will enumerate.
inline constexpr std::size_t kMaxModelStates = 5'000'000;

/// A generated model: chain (speeded up by theta), partition and diagnostics.
struct ModelInstance {
  std::string family;
  Chain chain;
  Partition partition;
  double theta = 1.0;
  /// "exact" when theta has a closed form, "estimate" otherwise.
  std::string theta_kind = "exact";
  /// Closed-form stationary log weights (unnormalized), one per state.
  std::vector<double> log_weights;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const ModelInstance& m);

// Zero-range and inclusion processes on the discrete torus ---------------------

/// a(n) = n^alpha ratio sequence: g(0)=0, g(1)=1, g(n)=(n/(n-1))^alpha.
double zero_range_g(int n, double alpha);

/// Compositions of n into parts in colexicographic order.
std::vector<std::vector<int>> compositions(int n, int parts);
/// Position of a composition in that order.
std::size_t composition_rank(const std::vector<int>& eta);
std::string composition_key(const std::vector<int>& eta);

/// Throws ParameterOutOfRange, StateSpaceTooLarge.
ModelInstance zero_range(int L, int N, double alpha, double p, int ell);
/// Throws ParameterOutOfRange, StateSpaceTooLarge.
ModelInstance inclusion(int L, int N, double d);

// Random walk in a potential field ----------------------------------------------

struct PotentialField {
  std::string name;
  int dim = 1;
  /// Open box (lower, upper) per coordinate.
  std::vector<double> lower, upper;
  /// Evaluates F at a point; may be empty when `values` is given.
  std::function<double(const std::vector<double>&)> f;
  /// Explicit values on the lattice points in row-major order (last
  /// coordinate fastest); used when f is empty.
  std::vector<double> values;
  /// Declared minima and saddle; detected when absent.
  std::vector<std::vector<double>> minima;
  std::optional<std::vector<double>> saddle;
};

/// Built-ins: "double_well_1d" (x^2-1)^2 on (-1.6,1.6), "double_well_2d"
/// (x^2-1)^2 + y^2 on (-1.6,1.6)x(-1,1), "flat_1d" and "flat_2d" (F = 0).
PotentialField builtin_potential(const std::string& name);

struct PotentialChain {
  Chain chain;
  std::vector<std::vector<int>> points;  // integer lattice coordinates k with point k/N
  std::vector<double> values;            // F at each state
};

/// Lattice chain with rates exp(-(N/2)(F(xi)-F(eta))), unit time scale.
PotentialChain potential_walk_chain(const PotentialField& field, int N);

/// Throws SaddleNotFound, NonSmoothBoundary, ParameterOutOfRange.
ModelInstance potential_walk(const PotentialField& field, int N, double kappa);

// Random walk on four cubes joined at corners ------------------------------------

/// Throws ParameterOutOfRange, StateSpaceTooLarge.
ModelInstance singular_graph(int N, int d, int ell, int M, bool compute_theta = true);

// Specs ----------------------------------------------------------------------------

/// Parses a TOML subset (tables, key = value with strings, numbers, booleans
/// and nested arrays, comments) into JSON. Throws SpecParseError with the
/// line number.
nlohmann::json parse_toml(std::string_view text);

/// Accepts JSON or the TOML subset; JSON is detected by a leading brace.
nlohmann::json parse_spec_text(std::string_view text);

struct ModelSpec {
  std::string family;
  nlohmann::json parameters = nlohmann::json::object();
  /// Optional partition override, same schema as partition JSON.
  nlohmann::json partition = nullptr;
};

/// Accepts {family, parameters} or flat keys next to family.
ModelSpec model_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ModelSpec& s);

/// Builds the model; N may be overridden (sweeps).
ModelInstance build_model(const ModelSpec& spec, std::optional<int> N_override = std::nullopt);

}  // namespace metastab
