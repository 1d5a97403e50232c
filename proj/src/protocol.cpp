#include "empathic/protocol.hpp"

#include <array>
#include <ostream>

#include "empathic/error.hpp"

namespace empathic {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 9> kTypes{"hello", "state", "belief", "metrics", "gesture",
                                            "control", "ack", "error", "frames"};

json pose_json(const AgentPose& p) {
  return {{"row", p.cell.row}, {"col", p.cell.col}, {"heading", to_string(p.heading)}};
}

}  // namespace

std::string encode(const WireMessage& m) {
  return json{{"type", m.type}, {"seq", m.seq}, {"payload", m.payload}}.dump();
}

WireMessage decode(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (!j.is_object()) throw SchemaError("message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw SchemaError("message needs a string 'type'");
  if (!j.contains("seq") || !j["seq"].is_number_unsigned()) throw SchemaError("message needs a non-negative integer 'seq'");
  WireMessage m;
  m.type = j["type"].get<std::string>();
  m.seq = j["seq"].get<std::uint64_t>();
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw SchemaError("'payload' must be an object");
    m.payload = j["payload"];
  }
  return m;
}

bool is_known_message_type(const std::string& type) {
  for (const char* t : kTypes)
    if (type == t) return true;
  return false;
}

json state_payload(const OnlineSession& s, bool running) {
  const auto& st = s.state();
  json objects = json::array();
  for (const auto& o : st.objects) objects.push_back({{"row", o.cell.row}, {"col", o.cell.col}, {"type", to_string(o.type)}});
  json p{{"tick", st.tick},
         {"episode_length", st.config.episode_length},
         {"size", st.config.size},
         {"agent", pose_json(st.agent)},
         {"objects", objects},
         {"score", st.score},
         {"frame", s.frames_produced()},
         {"finished", s.finished()},
         {"running", running}};
  if (!s.log().records.empty()) {
    const auto& r = s.log().records.back();
    p["last"] = {{"tick", r.tick}, {"action", to_string(r.action)}, {"reward", r.reward}};
    if (r.event) p["last"]["pickup"] = to_string(*r.event);
  }
  return p;
}

json belief_payload(const OnlineSession& s) {
  const auto& b = s.belief();
  json p{{"posterior", b.probabilities()},
         {"entropy", b.entropy()},
         {"map", map_ranking(b).values()},
         {"map_index", map_index(b)},
         {"policy", s.policy_spec().values()},
         {"updates", b.updates()},
         {"hypotheses", to_string(b.space())}};
  if (!s.updates().empty()) {
    const auto& u = s.updates().back();
    p["last_update"] = {{"tick", u.tick}, {"object", to_string(u.object)}, {"frame", u.frame}, {"probabilities", u.probabilities}};
  }
  return p;
}

json metrics_payload(const TickMetrics& m) {
  return {{"tick", m.tick},
          {"posterior", m.posterior},
          {"entropy", m.entropy},
          {"cumulative_return", m.cumulative_return},
          {"tau", m.tau},
          {"map_index", m.map_index},
          {"policy_index", m.policy_index},
          {"updates", m.updates}};
}

// ---- service ----

SessionService::SessionService(SessionConfig config, std::shared_ptr<const ModelParams> model, WindowConfig window)
    : config_(std::move(config)), model_(std::move(model)), window_(window) {
  reset(config_.seed);
}

void SessionService::reset(std::uint64_t seed) {
  config_.seed = seed;
  session_ = std::make_unique<OnlineSession>(config_, model_, window_);
  // headless fallback only makes sense with a simulated observer
  running_ = config_.input == InputMode::Synthetic && !client_;
}

void SessionService::record(bool inbound, int client, const std::string& text) {
  log_.push_back({inbound, client, text});
  if (log_stream_) *log_stream_ << json{{"dir", inbound ? "in" : "out"}, {"client", client}, {"message", text}}.dump() << '\n';
}

Outbound SessionService::send(int client, const std::string& type, json payload, bool close) {
  Outbound o{client, encode({type, ++out_seq_, std::move(payload)}), close};
  record(false, client, o.text);
  return o;
}

Outbound SessionService::error(int client, const std::string& code, const std::string& message,
                               std::optional<std::uint64_t> of) {
  json p{{"code", code}, {"message", message}};
  if (of) p["of"] = *of;
  return send(client, "error", std::move(p));
}

std::vector<Outbound> SessionService::connect(int client) {
  std::vector<Outbound> out;
  if (client_ && *client_ != client) {
    out.push_back(send(client, "error", {{"code", "busy"}, {"message", "session already has a client"}}, true));
    return out;
  }
  client_ = client;
  in_seq_.reset();
  out.push_back(send(client, "hello",
                     {{"protocol", kProtocolVersion},
                      {"seed", config_.seed},
                      {"input", to_string(config_.input)},
                      {"hypotheses", to_string(config_.hypotheses)},
                      {"step_period_s", config_.time.step_period_s},
                      {"fps", config_.time.fps}}));
  out.push_back(send(client, "state", state_payload(*session_, running_)));
  out.push_back(send(client, "belief", belief_payload(*session_)));
  return out;
}

void SessionService::disconnect(int client) {
  if (client_ && *client_ == client) {
    client_.reset();
    if (config_.input != InputMode::Synthetic) running_ = false;
  }
}

std::vector<Outbound> SessionService::receive(int client, const std::string& text) {
  record(true, client, text);
  std::vector<Outbound> out;
  if (!client_ || *client_ != client) {
    out.push_back(send(client, "error", {{"code", "busy"}, {"message", "not the session's client"}}, true));
    return out;
  }
  WireMessage m;
  try {
    m = decode(text);
  } catch (const ParseError& e) {
    out.push_back(error(client, "malformed", e.what(), std::nullopt));
    return out;
  } catch (const SchemaError& e) {
    out.push_back(error(client, "bad_envelope", e.what(), std::nullopt));
    return out;
  }
  if (in_seq_ && m.seq <= *in_seq_) {
    out.push_back(error(client, "bad_seq", "seq must increase, last was " + std::to_string(*in_seq_), m.seq));
    return out;
  }
  in_seq_ = m.seq;
  if (!is_known_message_type(m.type)) {
    out.push_back(error(client, "unknown_type", "unknown message type '" + m.type + "'", m.seq));
    return out;
  }

  if (m.type == "hello") {
    const int v = m.payload.value("protocol", kProtocolVersion);
    if (v != kProtocolVersion) {
      out.push_back(error(client, "protocol_version",
                          "client speaks " + std::to_string(v) + ", server " + std::to_string(kProtocolVersion), m.seq));
    } else {
      out.push_back(send(client, "ack", {{"of", m.seq}, {"type", "hello"}}));
    }
  } else if (m.type == "gesture") {
    if (config_.input != InputMode::Live && config_.input != InputMode::Synthetic) {
      out.push_back(error(client, "wrong_mode", "gestures need live or synthetic input", m.seq));
      return out;
    }
    const auto kind = m.payload.contains("kind") && m.payload["kind"].is_string()
                          ? parse_gesture_kind(m.payload["kind"].get<std::string>())
                          : std::nullopt;
    if (!kind) {
      out.push_back(error(client, "bad_payload", "gesture needs a known 'kind'", m.seq));
      return out;
    }
    if (session_->finished()) {
      out.push_back(error(client, "finished", "episode is over", m.seq));
      return out;
    }
    const auto g = session_->inject_gesture(*kind);
    json ack{{"of", m.seq}, {"type", "gesture"}, {"kind", to_string(g.kind)}, {"onset_frame", g.onset_frame},
             {"offset_frame", g.offset_frame}, {"tick", session_->state().tick}};
    if (m.payload.contains("client_ts")) ack["client_ts"] = m.payload["client_ts"];
    out.push_back(send(client, "ack", std::move(ack)));
  } else if (m.type == "frames") {
    if (config_.input != InputMode::External) {
      out.push_back(error(client, "wrong_mode", "frames need external input", m.seq));
      return out;
    }
    try {
      const auto frames = m.payload.at("values").get<std::vector<FrameFeatures>>();
      for (const auto& f : frames) session_->push_external_frame(f);
      out.push_back(send(client, "ack", {{"of", m.seq}, {"type", "frames"}, {"count", frames.size()}}));
    } catch (const json::exception&) {
      out.push_back(error(client, "bad_payload", "frames need 'values': rows of " + std::to_string(kFrameWidth), m.seq));
    }
  } else if (m.type == "control") {
    return handle_control(client, m);
  } else {
    out.push_back(error(client, "unexpected_type", "'" + m.type + "' is sent by the server only", m.seq));
  }
  return out;
}

std::vector<Outbound> SessionService::handle_control(int client, const WireMessage& m) {
  std::vector<Outbound> out;
  const std::string cmd = m.payload.value("command", "");
  auto ack = [&](json extra = json::object()) {
    extra["of"] = m.seq;
    extra["type"] = "control";
    extra["command"] = cmd;
    out.push_back(send(client, "ack", std::move(extra)));
  };
  if (cmd == "start") {
    running_ = !session_->finished();
    ack();
  } else if (cmd == "pause") {
    running_ = false;
    ack();
  } else if (cmd == "step") {
    ack();
    advance(out);
  } else if (cmd == "reset" || cmd == "seed") {
    std::uint64_t seed = config_.seed;
    if (m.payload.contains("seed")) {
      if (!m.payload["seed"].is_number_unsigned()) {
        out.push_back(error(client, "bad_payload", "seed must be a non-negative integer", m.seq));
        return out;
      }
      seed = m.payload["seed"].get<std::uint64_t>();
    } else if (cmd == "seed") {
      out.push_back(error(client, "bad_payload", "seed command needs 'seed'", m.seq));
      return out;
    }
    reset(seed);
    ack({{"seed", seed}});
    out.push_back(send(client, "state", state_payload(*session_, running_)));
    out.push_back(send(client, "belief", belief_payload(*session_)));
  } else {
    out.push_back(error(client, "bad_payload", "unknown control command '" + cmd + "'", m.seq));
  }
  return out;
}

void SessionService::advance(std::vector<Outbound>& out) {
  if (session_->finished()) {
    running_ = false;
    return;
  }
  const auto before = session_->updates().size();
  session_->step();
  if (session_->finished()) running_ = false;
  if (!client_) return;
  out.push_back(send(*client_, "state", state_payload(*session_, running_)));
  if (session_->updates().size() != before) {
    out.push_back(send(*client_, "belief", belief_payload(*session_)));
    out.push_back(send(*client_, "metrics", metrics_payload(session_->metrics().back())));
  }
}

std::vector<Outbound> SessionService::tick() {
  std::vector<Outbound> out;
  if (running_) advance(out);
  return out;
}

}  // namespace empathic
