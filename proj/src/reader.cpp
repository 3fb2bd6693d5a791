#include "dcmon/reader.hpp"

#include <charconv>
#include <vector>

namespace dcmon {

namespace {

std::optional<Timestamp> parse_ts(std::string_view s) {
  Timestamp v = 0;
  if (s.empty()) return std::nullopt;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> out;
  while (!path.empty()) {
    const auto slash = path.find('/');
    out.push_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
    if (path.empty()) out.emplace_back();
  }
  return out;
}

std::optional<Scope> entity_scope(std::string_view segment) {
  if (segment == "nodes") return Scope::node;
  if (segment == "dc") return Scope::dc;
  if (segment == "containers") return Scope::container;
  if (segment == "apps") return Scope::app;
  return std::nullopt;
}

HttpResponse text(int status, std::string body) {
  return HttpResponse{status, "text/plain; charset=utf-8", std::move(body) + "\n"};
}

HttpResponse ok(const om::Exposition& e) {
  return HttpResponse{200, std::string(om::kContentType), om::serialize_exposition(e)};
}

}  // namespace

RestApi::RestApi(const MetricsStore& store, Clock clock) : store_(store), clock_(std::move(clock)) {}

HttpResponse RestApi::handle_request(std::string_view method, std::string_view path) const {
  if (const auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  if (path.substr(0, kPrefix.size()) != kPrefix || path.size() <= kPrefix.size() + 1 ||
      path[kPrefix.size()] != '/') {
    return text(404, "not found");
  }
  const auto segs = split_path(path.substr(kPrefix.size() + 1));
  for (auto s : segs) {
    if (s.empty()) return text(404, "not found");
  }

  // Resolve the route first so unknown paths are 404 whatever the method.
  enum class Kind { none, from, range, latest, all_from, all_range } kind = Kind::none;
  std::optional<Scope> scope;
  std::string_view id;
  std::vector<std::string_view> stamps;
  if (!segs.empty() && (scope = entity_scope(segs[0]))) {
    if (segs.size() == 3 && segs[2] == "latest") {
      if (*scope == Scope::node || *scope == Scope::dc) kind = Kind::latest;
    } else if (segs.size() == 3) {
      kind = Kind::from;
    } else if (segs.size() == 4) {
      kind = Kind::range;
    }
    if (segs.size() >= 2) id = segs[1];
    stamps.assign(segs.begin() + std::min<std::size_t>(2, segs.size()), segs.end());
  } else if (!segs.empty() && parse_ts(segs[0])) {
    if (segs.size() == 1) kind = Kind::all_from;
    if (segs.size() == 2) kind = Kind::all_range;
    stamps = segs;
  }
  if (kind == Kind::none) return text(404, "not found");
  if (method != "GET") return text(405, "method not allowed");

  if (kind == Kind::latest) return ok(store_.latest_crucial(*scope, id));

  std::vector<Timestamp> ts;
  for (auto s : stamps) {
    const auto v = parse_ts(s);
    if (!v) return text(400, "bad timestamp '" + std::string(s) + "'");
    ts.push_back(*v);
  }
  if (ts.size() == 2 && ts[0] > ts[1]) return text(400, "start is after end");

  switch (kind) {
    case Kind::from: return ok(store_.query_from(*scope, id, ts[0], clock_()));
    case Kind::range: return ok(store_.query_range(*scope, id, ts[0], ts[1]));
    case Kind::all_from: {
      const Timestamp now = clock_();
      if (ts[0] > now + 1) return ok(om::Exposition{});
      return ok(store_.query_all(ts[0], now + 1));
    }
    case Kind::all_range: return ok(store_.query_all(ts[0], ts[1]));
    default: return text(404, "not found");
  }
}

void publish_latest(Transport& transport, Scope scope, const std::string& scope_id,
                    const om::Exposition& e) {
  std::optional<Topic> topic;
  if (scope == Scope::node) topic = Topic::nodes(scope_id);
  if (scope == Scope::dc) topic = Topic::dc(scope_id);
  if (!topic) return;
  transport.publish(*topic, om::serialize_exposition(e));
}

}  // namespace dcmon
