// src/materials.cpp

// Copyright 2026  The sdelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <json.hpp>

#include "sde/roomsim.hpp"

namespace sde {

namespace {

// Generated from data/materials.json at configure time.
#include "materials_data.inc"

}  // namespace

std::string ToString(SurfaceClass s) {
  switch (s) {
    case SurfaceClass::kFloor: return "floor";
    case SurfaceClass::kCeiling: return "ceiling";
    case SurfaceClass::kWall: return "wall";
  }
  return "wall";
}

SurfaceClass SurfaceClassFromString(const std::string& s) {
  if (s == "floor") return SurfaceClass::kFloor;
  if (s == "ceiling") return SurfaceClass::kCeiling;
  if (s == "wall") return SurfaceClass::kWall;
  throw InvalidInput("unknown surface class '" + s + "'");
}

void Material::Validate() const {
  for (int b = 0; b < kNumBands; ++b) {
    const double a = absorption[b];
    if (!(a >= 0.0 && a <= 1.0)) {
      throw InvalidInput("material '" + name + "': absorption coefficient " +
                         std::to_string(a) + " outside [0, 1]");
    }
  }
}

Material Material::Uniform(double alpha, SurfaceClass surface) {
  Material m;
  m.name = "uniform_" + std::to_string(alpha);
  m.surface = surface;
  m.absorption = BandArray::Constant(alpha);
  m.Validate();
  return m;
}

MaterialTable MaterialTable::FromJson(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("material table: ") + e.what());
  }
  MaterialTable table;
  table.version = doc.value("version", 0);
  if (!doc.contains("materials") || !doc["materials"].is_array()) {
    throw InvalidInput("material table: missing 'materials' array");
  }
  for (const auto& entry : doc["materials"]) {
    Material m;
    m.name = entry.at("name").get<std::string>();
    m.surface = SurfaceClassFromString(entry.at("surface").get<std::string>());
    const auto& coeffs = entry.at("absorption");
    if (!coeffs.is_array() || coeffs.size() != kNumBands) {
      throw InvalidInput("material '" + m.name + "': expected 6 band coefficients");
    }
    for (int b = 0; b < kNumBands; ++b) m.absorption[b] = coeffs[b].get<double>();
    m.Validate();
    switch (m.surface) {
      case SurfaceClass::kFloor: table.floors.push_back(m); break;
      case SurfaceClass::kCeiling: table.ceilings.push_back(m); break;
      case SurfaceClass::kWall: table.walls.push_back(m); break;
    }
  }
  return table;
}

std::string MaterialTable::ToJson() const {
  nlohmann::json doc;
  doc["schema"] = "sdelab.materials";
  doc["version"] = version;
  doc["bands_hz"] = kBandCentersHz;
  auto& list = doc["materials"] = nlohmann::json::array();
  for (const auto* group : {&floors, &ceilings, &walls}) {
    for (const Material& m : *group) {
      list.push_back({{"name", m.name},
                      {"surface", ToString(m.surface)},
                      {"absorption", std::vector<double>(m.absorption.begin(),
                                                         m.absorption.end())}});
    }
  }
  return doc.dump(2);
}

MaterialTable MaterialTable::Builtin() {
  static const MaterialTable table = FromJson(kMaterialsJson);
  return table;
}

}  // namespace sde
