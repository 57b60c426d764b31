#pragma once

// Annotated museum map: occupancy grid, area partition, exhibit annotations
// and the curated tour order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "narraguide/error.hpp"

namespace narraguide {

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double theta) {
  double a = std::remainder(theta, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose() = default;
  Pose(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  Point position() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Cell {
  int col = 0;
  int row = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Occupancy grid. Row r covers world y in [origin.y + r*res, origin.y + (r+1)*res).
class GridMap {
 public:
  GridMap() = default;
  GridMap(double resolution, Point origin, int width, int height, std::vector<std::uint8_t> occupied)
      : resolution_(resolution), origin_(origin), width_(width), height_(height),
        occupied_(std::move(occupied)) {}

  double resolution() const { return resolution_; }
  Point origin() const { return origin_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return occupied_.size(); }

  bool in_bounds(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width_ && c.row < height_; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.col);
  }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)),
            static_cast<int>(index / static_cast<std::size_t>(width_))};
  }
  bool occupied(Cell c) const { return occupied_[index(c)] != 0; }
  bool free(Cell c) const { return in_bounds(c) && !occupied(c); }

  /// Cell containing a world point, half-open on both axes. Returns nullopt
  /// outside the grid.
  std::optional<Cell> try_cell_of(Point p) const {
    const double fx = std::floor((p.x - origin_.x) / resolution_);
    const double fy = std::floor((p.y - origin_.y) / resolution_);
    if (!(fx >= 0.0 && fy >= 0.0 && fx < width_ && fy < height_)) return std::nullopt;
    return Cell{static_cast<int>(fx), static_cast<int>(fy)};
  }

  Cell cell_of(Point p) const {
    auto c = try_cell_of(p);
    if (!c) {
      throw OutOfBounds("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") is outside the grid");
    }
    return *c;
  }

  bool point_free(Point p) const {
    auto c = try_cell_of(p);
    return c && !occupied(*c);
  }

  Point center(Cell c) const {
    return {origin_.x + (c.col + 0.5) * resolution_, origin_.y + (c.row + 0.5) * resolution_};
  }

  const std::vector<std::uint8_t>& cells() const { return occupied_; }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  double resolution_ = 1.0;
  Point origin_{};
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> occupied_;
};

struct Area {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::size_t> cell_ids;
  friend bool operator==(const Area&, const Area&) = default;
};

enum class Speaker { guide, visitor };

struct DialogueTurn {
  Speaker speaker = Speaker::guide;
  std::string text;
  friend bool operator==(const DialogueTurn&, const DialogueTurn&) = default;
};

struct Exhibit {
  int id = 0;
  std::string name;
  std::string area_id;
  Pose viewing_pose;
  std::string intro;
  std::vector<DialogueTurn> sample_dialogue;
  std::optional<std::string> history;
  std::optional<std::string> activities;
  std::optional<std::string> misc;
  friend bool operator==(const Exhibit&, const Exhibit&) = default;
};

/// Immutable after construction; safe to share between readers.
class AnnotatedMap {
 public:
  AnnotatedMap(GridMap grid, std::vector<Area> areas, std::vector<Exhibit> exhibits,
               std::vector<int> tour_order, std::optional<Pose> start = std::nullopt)
      : grid_(std::move(grid)), areas_(std::move(areas)), exhibits_(std::move(exhibits)),
        tour_order_(std::move(tour_order)), start_(start) {
    validate();
  }

  const GridMap& grid() const { return grid_; }
  const std::vector<Area>& areas() const { return areas_; }
  const std::vector<Exhibit>& exhibits() const { return exhibits_; }
  const std::vector<int>& tour_order() const { return tour_order_; }

  /// Explicit start pose, or the center of the first free cell in row-major order.
  Pose start_pose() const {
    if (start_) return *start_;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      Cell c = grid_.cell_at(i);
      if (!grid_.occupied(c)) {
        Point p = grid_.center(c);
        return {p.x, p.y, 0.0};
      }
    }
    return {};
  }
  bool has_explicit_start() const { return start_.has_value(); }

  const Exhibit* find_exhibit(int id) const {
    auto it = exhibit_index_.find(id);
    return it == exhibit_index_.end() ? nullptr : &exhibits_[it->second];
  }
  const Exhibit& exhibit(int id) const {
    const Exhibit* e = find_exhibit(id);
    if (e == nullptr) throw UnknownExhibit(id);
    return *e;
  }
  const Area* find_area(std::string_view id) const {
    for (const auto& a : areas_) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }

  Cell cell_of(Point p) const { return grid_.cell_of(p); }

  const Area& area_of(const Pose& pose) const {
    Cell c = grid_.cell_of(pose.position());
    if (grid_.occupied(c)) {
      throw OccupiedCell("pose lies on occupied cell (" + std::to_string(c.col) + ", " +
                         std::to_string(c.row) + ")");
    }
    return areas_[static_cast<std::size_t>(cell_area_[grid_.index(c)])];
  }

  /// Exhibits whose viewing-pose cell shares the pose's area, nearest first,
  /// ties broken by id.
  std::vector<const Exhibit*> nearby_exhibits(const Pose& pose) const {
    const Area& area = area_of(pose);
    std::vector<std::pair<double, const Exhibit*>> found;
    for (const auto& e : exhibits_) {
      if (&area_of(e.viewing_pose) == &area) {
        found.emplace_back(distance(pose.position(), e.viewing_pose.position()), &e);
      }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second->id < b.second->id;
    });
    std::vector<const Exhibit*> out;
    out.reserve(found.size());
    for (const auto& [d, e] : found) out.push_back(e);
    return out;
  }

  friend bool operator==(const AnnotatedMap& a, const AnnotatedMap& b) {
    return a.grid_ == b.grid_ && a.areas_ == b.areas_ && a.exhibits_ == b.exhibits_ &&
           a.tour_order_ == b.tour_order_ && a.start_ == b.start_;
  }

 private:
  void validate() {
    const auto n = static_cast<std::size_t>(grid_.width()) * static_cast<std::size_t>(grid_.height());
    if (!(grid_.resolution() > 0.0)) throw ValidationError("grid resolution must be > 0");
    if (grid_.width() <= 0 || grid_.height() <= 0 || n != grid_.size()) {
      throw ValidationError("grid width x height must equal the number of cells");
    }
    if (std::none_of(grid_.cells().begin(), grid_.cells().end(), [](std::uint8_t v) { return v == 0; })) {
      throw ValidationError("grid must contain at least one free cell");
    }

    cell_area_.assign(n, -1);
    std::set<std::string> area_ids;
    for (std::size_t a = 0; a < areas_.size(); ++a) {
      const Area& area = areas_[a];
      if (!area_ids.insert(area.id).second) throw ValidationError("duplicate area id '" + area.id + "'");
      if (area.cell_ids.empty()) throw ValidationError("area '" + area.id + "' has no cells");
      for (std::size_t id : area.cell_ids) {
        if (id >= n) throw ValidationError("area '" + area.id + "' references a cell outside the grid");
        if (cell_area_[id] != -1) {
          throw ValidationError("areas must be disjoint: cell " + std::to_string(id) + " is in '" +
                                areas_[static_cast<std::size_t>(cell_area_[id])].id + "' and '" + area.id + "'");
        }
        cell_area_[id] = static_cast<int>(a);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (grid_.cells()[i] == 0 && cell_area_[i] == -1) {
        Cell c = grid_.cell_at(i);
        throw ValidationError("free cell (" + std::to_string(c.col) + ", " + std::to_string(c.row) +
                              ") belongs to no area");
      }
    }

    for (std::size_t i = 0; i < exhibits_.size(); ++i) {
      const Exhibit& e = exhibits_[i];
      const std::string tag = "exhibit " + std::to_string(e.id);
      if (e.id <= 0) throw ValidationError(tag + ": exhibit id must be positive");
      if (!exhibit_index_.emplace(e.id, i).second) {
        throw ValidationError(tag + ": exhibit ids must be unique");
      }
      if (!area_ids.contains(e.area_id)) throw ValidationError(tag + ": unknown area '" + e.area_id + "'");
      auto cell = grid_.try_cell_of(e.viewing_pose.position());
      if (!cell) throw ValidationError(tag + ": viewing pose is outside the grid");
      if (grid_.occupied(*cell)) throw ValidationError(tag + ": viewing pose is on an occupied cell");
      if (e.intro.empty()) throw ValidationError(tag + ": intro must not be empty");
      if (e.sample_dialogue.size() < 2) throw ValidationError(tag + ": sample dialogue needs at least 2 turns");
      for (std::size_t t = 1; t < e.sample_dialogue.size(); ++t) {
        if (e.sample_dialogue[t].speaker == e.sample_dialogue[t - 1].speaker) {
          throw ValidationError(tag + ": sample dialogue speakers must alternate");
        }
      }
    }

    if (tour_order_.empty() && !exhibits_.empty()) throw ValidationError("tour order must not be empty");
    std::set<int> seen;
    for (int id : tour_order_) {
      if (!seen.insert(id).second) throw ValidationError("tour order lists exhibit " + std::to_string(id) + " twice");
      if (!exhibit_index_.contains(id)) {
        throw ValidationError("tour order references unknown exhibit " + std::to_string(id));
      }
    }

    if (start_) {
      auto cell = grid_.try_cell_of(start_->position());
      if (!cell || grid_.occupied(*cell)) throw ValidationError("start pose must lie on a free cell");
    }
  }

  GridMap grid_;
  std::vector<Area> areas_;
  std::vector<Exhibit> exhibits_;
  std::vector<int> tour_order_;
  std::optional<Pose> start_;
  std::vector<int> cell_area_;
  std::map<int, std::size_t> exhibit_index_;
};

// ---------------------------------------------------------------------------
// Map document (JSON text)

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
  return obj.at(key);
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ": unexpected value type");
  }
}

inline std::optional<std::string> optional_text(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get_as<std::string>(obj.at(key), where + "." + key);
}

inline Pose parse_pose(const nlohmann::json& j, const std::string& where) {
  return {get_as<double>(require(j, "x", where), where + ".x"),
          get_as<double>(require(j, "y", where), where + ".y"),
          get_as<double>(require(j, "theta", where), where + ".theta")};
}

inline nlohmann::json pose_json(const Pose& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

}  // namespace detail

/// Parses and validates a map document.
inline AnnotatedMap load_map(std::string_view document) {
  using nlohmann::json;
  using detail::get_as;
  using detail::require;

  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("map document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("map document must be an object");

  const json& g = require(doc, "grid", "map");
  const auto resolution = get_as<double>(require(g, "resolution", "grid"), "grid.resolution");
  const json& origin = require(g, "origin", "grid");
  if (!origin.is_array() || origin.size() != 2) throw ParseError("grid.origin must be [x, y]");
  const Point o{get_as<double>(origin[0], "grid.origin"), get_as<double>(origin[1], "grid.origin")};
  const int width = get_as<int>(require(g, "width", "grid"), "grid.width");
  const int height = get_as<int>(require(g, "height", "grid"), "grid.height");
  const json& rows = require(g, "rows", "grid");
  if (!rows.is_array()) throw ParseError("grid.rows must be an array");
  std::vector<std::uint8_t> cells;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = get_as<std::string>(rows[r], "grid.rows");
    if (width >= 0 && row.size() != static_cast<std::size_t>(width)) {
      throw ValidationError("grid row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                            " cells, expected width " + std::to_string(width));
    }
    for (char ch : row) {
      if (ch == '.') cells.push_back(0);
      else if (ch == '#') cells.push_back(1);
      else throw ParseError("grid row " + std::to_string(r) + ": unexpected cell character '" + std::string(1, ch) + "'");
    }
  }
  GridMap grid(resolution, o, width, height, std::move(cells));

  std::vector<Area> areas;
  for (const auto& a : get_as<std::vector<json>>(require(doc, "areas", "map"), "areas")) {
    Area area;
    area.id = get_as<std::string>(require(a, "id", "area"), "area.id");
    area.name = get_as<std::string>(require(a, "name", "area"), "area.name");
    area.description = detail::optional_text(a, "description", "area").value_or("");
    for (const auto& c : get_as<std::vector<std::vector<int>>>(require(a, "cells", "area " + area.id), "area.cells")) {
      if (c.size() != 2) throw ParseError("area '" + area.id + "': cells must be [col, row] pairs");
      Cell cell{c[0], c[1]};
      if (!grid.in_bounds(cell) || width <= 0) {
        throw ValidationError("area '" + area.id + "' references a cell outside the grid");
      }
      area.cell_ids.push_back(grid.index(cell));
    }
    areas.push_back(std::move(area));
  }

  std::vector<Exhibit> exhibits;
  for (const auto& e : get_as<std::vector<json>>(require(doc, "exhibits", "map"), "exhibits")) {
    Exhibit ex;
    ex.id = get_as<int>(require(e, "id", "exhibit"), "exhibit.id");
    const std::string where = "exhibit " + std::to_string(ex.id);
    ex.name = get_as<std::string>(require(e, "name", where), where + ".name");
    ex.area_id = get_as<std::string>(require(e, "area_id", where), where + ".area_id");
    ex.viewing_pose = detail::parse_pose(require(e, "viewing_pose", where), where + ".viewing_pose");
    ex.intro = get_as<std::string>(require(e, "intro", where), where + ".intro");
    ex.history = detail::optional_text(e, "history", where);
    ex.activities = detail::optional_text(e, "activities", where);
    ex.misc = detail::optional_text(e, "misc", where);
    for (const auto& t : get_as<std::vector<json>>(require(e, "sample_dialogue", where), where + ".sample_dialogue")) {
      const auto speaker = get_as<std::string>(require(t, "speaker", where), where + ".speaker");
      DialogueTurn turn;
      if (speaker == "guide") turn.speaker = Speaker::guide;
      else if (speaker == "visitor") turn.speaker = Speaker::visitor;
      else throw ParseError(where + ": speaker must be \"guide\" or \"visitor\"");
      turn.text = get_as<std::string>(require(t, "text", where), where + ".text");
      ex.sample_dialogue.push_back(std::move(turn));
    }
    exhibits.push_back(std::move(ex));
  }

  auto tour = get_as<std::vector<int>>(require(doc, "tour_order", "map"), "tour_order");
  std::optional<Pose> start;
  if (doc.contains("start")) start = detail::parse_pose(doc.at("start"), "start");

  return AnnotatedMap(std::move(grid), std::move(areas), std::move(exhibits), std::move(tour), start);
}

inline nlohmann::json map_to_json(const AnnotatedMap& map) {
  using nlohmann::json;
  const GridMap& g = map.grid();
  json rows = json::array();
  for (int r = 0; r < g.height(); ++r) {
    std::string row;
    for (int c = 0; c < g.width(); ++c) row += g.occupied({c, r}) ? '#' : '.';
    rows.push_back(row);
  }
  json doc;
  doc["grid"] = {{"resolution", g.resolution()},
                 {"origin", {g.origin().x, g.origin().y}},
                 {"width", g.width()},
                 {"height", g.height()},
                 {"rows", rows}};
  if (map.has_explicit_start()) doc["start"] = detail::pose_json(map.start_pose());
  json areas = json::array();
  for (const auto& a : map.areas()) {
    json cells = json::array();
    for (std::size_t id : a.cell_ids) {
      Cell c = g.cell_at(id);
      cells.push_back({c.col, c.row});
    }
    json area = {{"id", a.id}, {"name", a.name}};
    if (!a.description.empty()) area["description"] = a.description;
    area["cells"] = cells;
    areas.push_back(area);
  }
  doc["areas"] = areas;
  json exhibits = json::array();
  for (const auto& e : map.exhibits()) {
    json ex = {{"id", e.id}, {"name", e.name}, {"area_id", e.area_id},
               {"viewing_pose", detail::pose_json(e.viewing_pose)}, {"intro", e.intro}};
    if (e.history) ex["history"] = *e.history;
    if (e.activities) ex["activities"] = *e.activities;
    if (e.misc) ex["misc"] = *e.misc;
    json dialogue = json::array();
    for (const auto& t : e.sample_dialogue) {
      dialogue.push_back({{"speaker", t.speaker == Speaker::guide ? "guide" : "visitor"}, {"text", t.text}});
    }
    ex["sample_dialogue"] = dialogue;
    exhibits.push_back(ex);
  }
  doc["exhibits"] = exhibits;
  doc["tour_order"] = map.tour_order();
  return doc;
}

inline std::string serialize_map(const AnnotatedMap& map) { return map_to_json(map).dump(2) + "\n"; }

}  // namespace narraguide
