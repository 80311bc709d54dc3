#pragma once

#include <Eigen/Dense>

#include "json.hpp"
#include "textcausal/errors.hpp"

namespace textcausal {

inline nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); i++) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); j++) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ContractError("matrix field is not an array");
    Eigen::Index r = (Eigen::Index)j.size();
    Eigen::Index c = r == 0 ? 0 : (Eigen::Index)j[0].size();
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; i++) {
        if ((Eigen::Index)j[i].size() != c) throw ContractError("ragged matrix field");
        for (Eigen::Index k = 0; k < c; k++) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); i++) a.push_back(v[i]);
    return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v((Eigen::Index)j.size());
    for (Eigen::Index i = 0; i < v.size(); i++) v[i] = j[i].get<double>();
    return v;
}

}  // namespace textcausal
