#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tendonid/dataset.hpp"

namespace tendonid {

/// Which candidate-function families enter the library.
struct LibrarySpec {
    bool include_constant = true;
    int poly_degree_state = 2;
    bool include_state_input_products = true;
    int poly_degree_input = 1;
    bool include_trig = true;

    void validate() const;
};

/// One library column: a monomial x^a u^b, or sin/cos of one state.
struct LibraryTerm {
    enum class Kind { Monomial, Sin, Cos };

    Kind kind = Kind::Monomial;
    std::vector<int> state_powers;  // Monomial only
    std::vector<int> input_powers;  // Monomial only
    int state_index = 0;            // Sin/Cos only

    std::string name() const;
    double evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

    friend bool operator==(const LibraryTerm&, const LibraryTerm&) = default;
};

/// Canonical column order: constant, x, u, x monomials (degree >= 2, graded-lex),
/// u monomials (degree >= 2, graded-lex), x_i*u_j products, sin(x), cos(x).
std::vector<LibraryTerm> library_terms(const LibrarySpec& spec, Eigen::Index num_states, Eigen::Index num_inputs);

/// Parses a name produced by LibraryTerm::name().
LibraryTerm parse_library_term(const std::string& name, Eigen::Index num_states, Eigen::Index num_inputs);

struct Library {
    Eigen::MatrixXd theta;  // m x T
    std::vector<LibraryTerm> terms;
};

/// Evaluates every term on each row of (X, U). Throws if T >= m.
Library build_library(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U, const LibrarySpec& spec);

/// Row of term values at one point.
Eigen::RowVectorXd evaluate_terms(const std::vector<LibraryTerm>& terms, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u);

/// d(term)/dx and d(term)/du for every term (T x q and T x p).
void term_jacobians(const std::vector<LibraryTerm>& terms, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                    Eigen::MatrixXd& dx, Eigen::MatrixXd& du);

struct StlsOptions {
    /// Scale every column to unit RMS before thresholding; xi is returned in original units.
    bool normalize = true;
    int max_iterations = 20;
    /// Relative pivot threshold for rank detection inside each least-squares solve.
    double rank_tolerance = 1e-10;
};

struct StlsResult {
    Eigen::MatrixXd xi;            // T x q, original units, exact zeros off the support
    Eigen::VectorXd column_scale;  // RMS of each column (1 when normalization is off)
    std::vector<int> rank_dropped;   // linearly dependent columns removed
    std::vector<int> empty_outputs;  // outputs whose active set ended empty
    int iterations = 0;              // max over outputs
    bool converged = true;           // active sets reached a fixed point before the cap
    std::vector<std::string> warnings;
};

/// Sequential thresholded least squares, column by column of Xprime.
/// A coefficient survives when |xi_j| * column_scale_j >= lambda.
StlsResult stls(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& xprime, double lambda,
                const StlsOptions& options = {});

/// Discrete one-step map x+ = Theta(x, u) * Xi.
struct SindyModel {
    LibrarySpec library;
    std::vector<LibraryTerm> terms;
    Eigen::MatrixXd xi;            // T x q
    Eigen::VectorXd column_scale;  // threshold scale per term, see StlsResult
    double lambda = 0.0;
    double sample_time_s = 1.0;
    Eigen::Index num_states = 0;
    Eigen::Index num_inputs = 0;

    Eigen::Index outputs() const { return num_states; }
    Eigen::Index inputs() const { return num_inputs; }
    Eigen::Index active_terms() const;

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    /// Jacobians of step() with respect to x (q x q) and u (q x p).
    void jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                   Eigen::MatrixXd& B) const;

    void validate() const;
};

/// Free run from x0 over the rows of U. Throws DivergenceError past |x| > 1e6.
Eigen::MatrixXd simulate_sindy(const SindyModel& model, const Eigen::MatrixXd& U, const Eigen::VectorXd& x0);

inline constexpr double kDefaultSindyLambda = 0.0035;

/// X = outputs[0..m-2], X' = outputs[1..m-1], library on (X, inputs[0..m-2]).
SindyModel identify_sindyc(const Dataset& ds, const LibrarySpec& spec, double lambda = kDefaultSindyLambda,
                           StlsResult* diagnostics = nullptr);

}  // namespace tendonid
