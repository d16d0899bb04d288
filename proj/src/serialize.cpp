#include "mcei/serialize.hpp"

#include "mcei/errors.hpp"

namespace mcei {

json mat_to_json(const Mat &m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json &j) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw DataError("matrix json must be a non-empty array of arrays");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols)
            throw DataError("matrix json rows have unequal lengths");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

json mlp_to_json(const Mlp &net) {
    json layers = json::array();
    for (const Dense &d : net.layers) {
        layers.push_back({{"weights", mat_to_json(d.W)},
                          {"biases", mat_to_json(d.b)},
                          {"activation", act_name(d.act)}});
    }
    return {{"layers", layers}};
}

Mlp mlp_from_json(const json &j) {
    Mlp net;
    for (const json &lj : j.at("layers")) {
        Dense d;
        d.W = mat_from_json(lj.at("weights"));
        d.b = mat_from_json(lj.at("biases"));
        d.act = act_from_name(lj.at("activation").get<std::string>());
        if (d.b.rows() != d.W.rows() || d.b.cols() != 1)
            throw DataError("mlp json: bias shape does not match weights");
        net.layers.push_back(std::move(d));
    }
    return net;
}

json cond_gaussian_to_json(const CondGaussian &g) {
    json j{{"mean_net", mlp_to_json(g.mean_net)},
           {"scale_is_net", g.scale_is_net},
           {"scale_floor", g.scale_floor}};
    if (g.scale_is_net)
        j["scale_net"] = mlp_to_json(g.scale_net);
    else
        j["scale_raw"] = mat_to_json(g.scale_raw);
    return j;
}

CondGaussian cond_gaussian_from_json(const json &j) {
    CondGaussian g;
    g.mean_net = mlp_from_json(j.at("mean_net"));
    g.scale_is_net = j.at("scale_is_net").get<bool>();
    g.scale_floor = j.at("scale_floor").get<double>();
    if (g.scale_is_net)
        g.scale_net = mlp_from_json(j.at("scale_net"));
    else
        g.scale_raw = mat_from_json(j.at("scale_raw"));
    return g;
}

json param_document(const Mlp &net) {
    return {{"schema_version", kSchemaVersion}, {"kind", "mlp"}, {"model", mlp_to_json(net)}};
}

Mlp mlp_from_document(const json &doc) {
    const int v = doc.at("schema_version").get<int>();
    if (v != kSchemaVersion)
        throw DataError("unsupported parameter schema version " + std::to_string(v));
    return mlp_from_json(doc.at("model"));
}

} // namespace mcei
