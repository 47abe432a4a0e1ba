#include "tilq/problem.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tilq/errors.hpp"

namespace tilq {

using json = nlohmann::json;

namespace {

void require_finite(const SampledScalar& f, const std::string& name,
                    std::vector<Violation>& out) {
    for (int k = 0; k < f.v.size(); ++k) {
        if (!std::isfinite(f.v[k]))
            out.push_back({name, k, f.v[k], name + " not finite"});
    }
}

void require_finite(const SampledVector& f, const std::string& name,
                    std::vector<Violation>& out) {
    for (int k = 0; k < f.v.rows(); ++k) {
        if (!f.v.row(k).allFinite())
            out.push_back({name, k, f.v.row(k).sum(), name + " not finite"});
    }
}

void require_finite(const SampledMatrix& f, const std::string& name,
                    std::vector<Violation>& out) {
    for (size_t k = 0; k < f.v.size(); ++k) {
        if (!f.v[k].allFinite())
            out.push_back({name, static_cast<int>(k), 0.0, name + " not finite"});
    }
}

void check_vector_shape(const SampledVector& f, const std::string& name, int n_points,
                        int dim, std::vector<Violation>& out) {
    if (f.v.rows() != n_points)
        out.push_back({name, -1, static_cast<double>(f.v.rows()),
                       name + ": expected " + std::to_string(n_points) + " samples"});
    if (f.v.cols() != dim)
        out.push_back({name, -1, static_cast<double>(f.v.cols()),
                       name + ": expected dimension " + std::to_string(dim)});
}

void check_matrix_shape(const SampledMatrix& f, const std::string& name, int n_points,
                        int rows, int cols, std::vector<Violation>& out) {
    if (static_cast<int>(f.v.size()) != n_points) {
        out.push_back({name, -1, static_cast<double>(f.v.size()),
                       name + ": expected " + std::to_string(n_points) + " samples"});
        return;
    }
    for (size_t k = 0; k < f.v.size(); ++k) {
        if (f.v[k].rows() != rows || f.v[k].cols() != cols) {
            out.push_back({name, static_cast<int>(k),
                           static_cast<double>(f.v[k].rows() * 1000 + f.v[k].cols()),
                           name + ": expected " + std::to_string(rows) + "x" +
                               std::to_string(cols)});
            return;  // one shape violation per field is enough
        }
    }
}

constexpr double kPsdSlack = 1e-12;

}  // namespace

std::vector<Violation> validate(const ProblemSpec& spec) {
    std::vector<Violation> out;
    const int np = spec.grid.n_points();

    if (spec.l < 1) out.push_back({"l", -1, double(spec.l), "l must be >= 1"});
    if (spec.d < 1) out.push_back({"d", -1, double(spec.d), "d must be >= 1"});
    if (spec.grid.n_steps < 2)
        out.push_back({"n_steps", -1, double(spec.grid.n_steps), "n_steps must be >= 2"});
    if (!(spec.grid.T > 0.0))
        out.push_back({"T", -1, spec.grid.T, "T must be > 0"});
    if (!out.empty()) return out;  // shapes below assume sane (l, d, grid)

    if (spec.A.v.size() != np)
        out.push_back({"A", -1, double(spec.A.v.size()), "A: wrong sample count"});
    if (spec.b.v.size() != np)
        out.push_back({"b", -1, double(spec.b.v.size()), "b: wrong sample count"});
    if (spec.Q1.v.size() != np)
        out.push_back({"Q1", -1, double(spec.Q1.v.size()), "Q1: wrong sample count"});
    if (spec.Q2.v.size() != np)
        out.push_back({"Q2", -1, double(spec.Q2.v.size()), "Q2: wrong sample count"});
    check_vector_shape(spec.B1, "B1", np, spec.l, out);
    check_vector_shape(spec.B2, "B2", np, spec.l, out);
    check_vector_shape(spec.C, "C", np, spec.d, out);
    check_vector_shape(spec.sigma, "sigma", np, spec.d, out);
    check_matrix_shape(spec.D1, "D1", np, spec.d, spec.l, out);
    check_matrix_shape(spec.D2, "D2", np, spec.d, spec.l, out);
    check_matrix_shape(spec.R1, "R1", np, spec.l, spec.l, out);
    check_matrix_shape(spec.R2, "R2", np, spec.l, spec.l, out);
    if (!out.empty()) return out;

    require_finite(spec.A, "A", out);
    require_finite(spec.b, "b", out);
    require_finite(spec.Q1, "Q1", out);
    require_finite(spec.Q2, "Q2", out);
    require_finite(spec.B1, "B1", out);
    require_finite(spec.B2, "B2", out);
    require_finite(spec.C, "C", out);
    require_finite(spec.sigma, "sigma", out);
    require_finite(spec.D1, "D1", out);
    require_finite(spec.D2, "D2", out);
    require_finite(spec.R1, "R1", out);
    require_finite(spec.R2, "R2", out);
    if (!std::isfinite(spec.x0)) out.push_back({"x0", -1, spec.x0, "x0 not finite"});

    for (int k = 0; k < np; ++k) {
        if (spec.Q1.v[k] < 0.0)
            out.push_back({"Q1", k, spec.Q1.v[k], "Q1 must be >= 0"});
        if (spec.Q2.v[k] < 0.0)
            out.push_back({"Q2", k, spec.Q2.v[k], "Q2 must be >= 0"});
    }
    if (spec.G1 < 0.0) out.push_back({"G1", -1, spec.G1, "G1 must be >= 0"});
    if (spec.G2 < 0.0) out.push_back({"G2", -1, spec.G2, "G2 must be >= 0"});

    auto check_R = [&](const SampledMatrix& R, const std::string& name) {
        for (int k = 0; k < np; ++k) {
            const Eigen::MatrixXd& Rk = R.node(k);
            double asym = (Rk - Rk.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-10 * std::max(1.0, Rk.cwiseAbs().maxCoeff())) {
                out.push_back({name, k, asym, name + " not symmetric"});
                continue;
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rk);
            double mn = es.eigenvalues().minCoeff();
            if (mn < -kPsdSlack)
                out.push_back({name, k, mn, name + " not PSD"});
        }
    };
    check_R(spec.R1, "R1");
    check_R(spec.R2, "R2");

    return out;
}

ProblemSpec ConstantSpecBuilder::build() const {
    ProblemSpec s;
    s.l = l;
    s.d = d;
    s.grid = TimeGrid(T, n_steps);
    s.x0 = x0;
    s.G1 = G1; s.G2 = G2; s.h1 = h1; s.h2 = h2;
    s.lam1 = lam1; s.lam2 = lam2; s.mu1 = mu1; s.mu2 = mu2;
    s.A = constant_scalar(s.grid, A);
    s.b = constant_scalar(s.grid, b);
    s.Q1 = constant_scalar(s.grid, Q1);
    s.Q2 = constant_scalar(s.grid, Q2);
    s.B1 = constant_vector(s.grid, B1);
    s.B2 = constant_vector(s.grid, B2);
    s.C = constant_vector(s.grid, C);
    s.sigma = constant_vector(s.grid, sigma);
    s.D1 = constant_matrix(s.grid, D1);
    s.D2 = constant_matrix(s.grid, D2);
    s.R1 = constant_matrix(s.grid, R1);
    s.R2 = constant_matrix(s.grid, R2);
    return s;
}

namespace {

// --- JSON ingestion ---------------------------------------------------------

Eigen::VectorXd parse_vec(const json& j, int dim, const std::string& name) {
    Eigen::VectorXd v(dim);
    if (j.is_number()) {
        if (dim != 1) throw SpecError(name + ": scalar given, expected length " +
                                      std::to_string(dim));
        v[0] = j.get<double>();
        return v;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != dim)
        throw SpecError(name + ": expected array of length " + std::to_string(dim));
    for (int i = 0; i < dim; ++i) v[i] = j[i].get<double>();
    return v;
}

Eigen::MatrixXd parse_mat(const json& j, int rows, int cols, const std::string& name) {
    Eigen::MatrixXd m(rows, cols);
    if (j.is_number()) {
        if (rows != 1 || cols != 1)
            throw SpecError(name + ": scalar given, expected " + std::to_string(rows) +
                            "x" + std::to_string(cols));
        m(0, 0) = j.get<double>();
        return m;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw SpecError(name + ": expected " + std::to_string(rows) + " rows");
    for (int r = 0; r < rows; ++r) {
        const json& row = j[r];
        if (row.is_number() && cols == 1) {
            m(r, 0) = row.get<double>();
            continue;
        }
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw SpecError(name + ": row " + std::to_string(r) + " must have " +
                            std::to_string(cols) + " entries");
        for (int c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

const json& fn_entry(const json& fns, const std::string& name) {
    if (!fns.contains(name)) throw SpecError("functions." + name + " missing");
    const json& e = fns.at(name);
    if (!e.is_object() || (!e.contains("constant") && !e.contains("samples")))
        throw SpecError("functions." + name + ": need \"constant\" or \"samples\"");
    return e;
}

SampledScalar parse_scalar_fn(const json& fns, const std::string& name, int np) {
    const json& e = fn_entry(fns, name);
    SampledScalar f;
    f.v.resize(np);
    if (e.contains("constant")) {
        f.v.setConstant(e.at("constant").get<double>());
        return f;
    }
    const json& s = e.at("samples");
    if (!s.is_array() || static_cast<int>(s.size()) != np)
        throw SpecError("functions." + name + ": expected " + std::to_string(np) +
                        " samples");
    for (int k = 0; k < np; ++k) f.v[k] = s[k].get<double>();
    return f;
}

SampledVector parse_vector_fn(const json& fns, const std::string& name, int np, int dim) {
    const json& e = fn_entry(fns, name);
    SampledVector f;
    f.v.resize(np, dim);
    if (e.contains("constant")) {
        Eigen::VectorXd c = parse_vec(e.at("constant"), dim, name);
        f.v = c.transpose().replicate(np, 1);
        return f;
    }
    const json& s = e.at("samples");
    if (!s.is_array() || static_cast<int>(s.size()) != np)
        throw SpecError("functions." + name + ": expected " + std::to_string(np) +
                        " samples");
    for (int k = 0; k < np; ++k)
        f.v.row(k) = parse_vec(s[k], dim, name).transpose();
    return f;
}

SampledMatrix parse_matrix_fn(const json& fns, const std::string& name, int np, int rows,
                              int cols) {
    const json& e = fn_entry(fns, name);
    SampledMatrix f;
    if (e.contains("constant")) {
        f.v.assign(static_cast<size_t>(np), parse_mat(e.at("constant"), rows, cols, name));
        return f;
    }
    const json& s = e.at("samples");
    if (!s.is_array() || static_cast<int>(s.size()) != np)
        throw SpecError("functions." + name + ": expected " + std::to_string(np) +
                        " samples");
    f.v.reserve(static_cast<size_t>(np));
    for (int k = 0; k < np; ++k) f.v.push_back(parse_mat(s[k], rows, cols, name));
    return f;
}

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (int r = 0; r < m.rows(); ++r) a.push_back(vec_to_json(m.row(r).transpose()));
    return a;
}

}  // namespace

ProblemSpec parse_spec_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("config parse error: ") + e.what());
    }
    ProblemSpec spec;
    try {
        spec.l = j.at("l").get<int>();
        spec.d = j.at("d").get<int>();
        spec.grid = TimeGrid(j.at("T").get<double>(), j.at("n_steps").get<int>());
        spec.x0 = j.at("x0").get<double>();
        const json& c = j.at("constants");
        spec.G1 = c.at("G1").get<double>();
        spec.G2 = c.at("G2").get<double>();
        spec.h1 = c.at("h1").get<double>();
        spec.h2 = c.at("h2").get<double>();
        spec.lam1 = c.at("lam1").get<double>();
        spec.lam2 = c.at("lam2").get<double>();
        spec.mu1 = c.at("mu1").get<double>();
        spec.mu2 = c.at("mu2").get<double>();

        const json& f = j.at("functions");
        const int np = spec.grid.n_points();
        spec.A = parse_scalar_fn(f, "A", np);
        spec.b = parse_scalar_fn(f, "b", np);
        spec.Q1 = parse_scalar_fn(f, "Q1", np);
        spec.Q2 = parse_scalar_fn(f, "Q2", np);
        spec.B1 = parse_vector_fn(f, "B1", np, spec.l);
        spec.B2 = parse_vector_fn(f, "B2", np, spec.l);
        spec.C = parse_vector_fn(f, "C", np, spec.d);
        spec.sigma = parse_vector_fn(f, "sigma", np, spec.d);
        spec.D1 = parse_matrix_fn(f, "D1", np, spec.d, spec.l);
        spec.D2 = parse_matrix_fn(f, "D2", np, spec.d, spec.l);
        spec.R1 = parse_matrix_fn(f, "R1", np, spec.l, spec.l);
        spec.R2 = parse_matrix_fn(f, "R2", np, spec.l, spec.l);
    } catch (const json::exception& e) {
        throw SpecError(std::string("config error: ") + e.what());
    }
    return spec;
}

ProblemSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_spec_json(ss.str());
}

std::string spec_to_json(const ProblemSpec& spec) {
    json f;
    const int np = spec.grid.n_points();
    auto scalar_fn = [&](const SampledScalar& s) {
        json a = json::array();
        for (int k = 0; k < np; ++k) a.push_back(s.v[k]);
        return json{{"samples", a}};
    };
    auto vector_fn = [&](const SampledVector& s) {
        json a = json::array();
        for (int k = 0; k < np; ++k) a.push_back(vec_to_json(s.node(k)));
        return json{{"samples", a}};
    };
    auto matrix_fn = [&](const SampledMatrix& s) {
        json a = json::array();
        for (int k = 0; k < np; ++k) a.push_back(mat_to_json(s.node(k)));
        return json{{"samples", a}};
    };
    f["A"] = scalar_fn(spec.A);
    f["b"] = scalar_fn(spec.b);
    f["Q1"] = scalar_fn(spec.Q1);
    f["Q2"] = scalar_fn(spec.Q2);
    f["B1"] = vector_fn(spec.B1);
    f["B2"] = vector_fn(spec.B2);
    f["C"] = vector_fn(spec.C);
    f["sigma"] = vector_fn(spec.sigma);
    f["D1"] = matrix_fn(spec.D1);
    f["D2"] = matrix_fn(spec.D2);
    f["R1"] = matrix_fn(spec.R1);
    f["R2"] = matrix_fn(spec.R2);

    json j;
    j["l"] = spec.l;
    j["d"] = spec.d;
    j["T"] = spec.grid.T;
    j["n_steps"] = spec.grid.n_steps;
    j["x0"] = spec.x0;
    j["constants"] = {{"G1", spec.G1}, {"G2", spec.G2}, {"h1", spec.h1},
                      {"h2", spec.h2}, {"lam1", spec.lam1}, {"lam2", spec.lam2},
                      {"mu1", spec.mu1}, {"mu2", spec.mu2}};
    j["functions"] = f;
    return j.dump(2);
}

ProblemSpec resample(const ProblemSpec& spec, int new_n_steps) {
    if (new_n_steps == spec.grid.n_steps) return spec;
    ProblemSpec out = spec;
    out.grid = TimeGrid(spec.grid.T, new_n_steps);
    const int np = out.grid.n_points();

    auto rs_scalar = [&](const SampledScalar& f) {
        SampledScalar g;
        g.v.resize(np);
        for (int k = 0; k < np; ++k) g.v[k] = f.at(spec.grid, out.grid.point(k));
        return g;
    };
    auto rs_vector = [&](const SampledVector& f) {
        SampledVector g;
        g.v.resize(np, f.dim());
        for (int k = 0; k < np; ++k)
            g.v.row(k) = f.at(spec.grid, out.grid.point(k)).transpose();
        return g;
    };
    auto rs_matrix = [&](const SampledMatrix& f) {
        SampledMatrix g;
        g.v.reserve(static_cast<size_t>(np));
        for (int k = 0; k < np; ++k) g.v.push_back(f.at(spec.grid, out.grid.point(k)));
        return g;
    };
    out.A = rs_scalar(spec.A);
    out.b = rs_scalar(spec.b);
    out.Q1 = rs_scalar(spec.Q1);
    out.Q2 = rs_scalar(spec.Q2);
    out.B1 = rs_vector(spec.B1);
    out.B2 = rs_vector(spec.B2);
    out.C = rs_vector(spec.C);
    out.sigma = rs_vector(spec.sigma);
    out.D1 = rs_matrix(spec.D1);
    out.D2 = rs_matrix(spec.D2);
    out.R1 = rs_matrix(spec.R1);
    out.R2 = rs_matrix(spec.R2);
    return out;
}

}  // namespace tilq
