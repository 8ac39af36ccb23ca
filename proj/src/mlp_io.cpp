#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tabvec/mlp.hpp"

namespace tabvec {

namespace {

nlohmann::json flatten(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

void unflatten(const nlohmann::json& values, Eigen::MatrixXd& m, const char* name) {
  if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != m.size())
    throw DataError(std::string("mlp params: '") + name + "' has the wrong number of entries");
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[i++].get<double>();
}

}  // namespace

std::string params_to_json(const MlpParamsd& params) {
  nlohmann::json doc = {{"format", "tabvec-mlp"},
                        {"version", 1},
                        {"input_dim", params.input_dim()},
                        {"hidden", params.hidden()},
                        {"classes", params.classes()},
                        {"w1", flatten(params.w1)},
                        {"b1", flatten(params.b1)},
                        {"w2", flatten(params.w2)},
                        {"b2", flatten(params.b2)}};
  return doc.dump();
}

MlpParamsd params_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mlp params: ") + e.what());
  }
  if (doc.value("format", "") != "tabvec-mlp" || doc.value("version", 0) != 1)
    throw DataError("mlp params: unsupported format or version");
  MlpParamsd p(doc.at("input_dim").get<Eigen::Index>(), doc.at("hidden").get<Eigen::Index>(),
               doc.at("classes").get<Eigen::Index>());
  Eigen::MatrixXd b1 = p.b1, b2 = p.b2;
  unflatten(doc.at("w1"), p.w1, "w1");
  unflatten(doc.at("b1"), b1, "b1");
  unflatten(doc.at("w2"), p.w2, "w2");
  unflatten(doc.at("b2"), b2, "b2");
  p.b1 = b1;
  p.b2 = b2;
  if (!p.all_finite()) throw DataError("mlp params: non-finite values");
  return p;
}

void save_params(const MlpParamsd& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << params_to_json(params) << '\n';
}

MlpParamsd load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace tabvec
