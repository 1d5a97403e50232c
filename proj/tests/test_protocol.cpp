#include <gtest/gtest.h>

#include <sstream>

#include "empathic/error.hpp"
#include "empathic/protocol.hpp"

using namespace empathic;
using nlohmann::json;

namespace {

const WindowConfig kWindow{};

std::shared_ptr<const ModelParams> model() {
  static const auto m = std::make_shared<const ModelParams>(ModelParams::init(ModelConfig::for_window(kWindow), 5));
  return m;
}

SessionConfig config(InputMode mode, std::uint64_t seed = 3) {
  SessionConfig c;
  c.seed = seed;
  c.env.episode_length = 40;
  c.input = mode;
  return c;
}

WireMessage msg(const Outbound& o) { return decode(o.text); }

std::string client_msg(const std::string& type, std::uint64_t seq, json payload = json::object()) {
  return encode({type, seq, std::move(payload)});
}

}  // namespace

TEST(Wire, RoundTrip) {
  const WireMessage m{"gesture", 7, {{"kind", "Smile"}}};
  const auto back = decode(encode(m));
  EXPECT_EQ(back.type, "gesture");
  EXPECT_EQ(back.seq, 7u);
  EXPECT_EQ(back.payload, m.payload);
  EXPECT_TRUE(decode(R"({"type":"control","seq":1})").payload.is_object());
}

TEST(Wire, RejectsBadEnvelopes) {
  EXPECT_THROW(decode("{not json"), ParseError);
  EXPECT_THROW(decode("[1,2]"), SchemaError);
  EXPECT_THROW(decode(R"({"seq":1})"), SchemaError);
  EXPECT_THROW(decode(R"({"type":"ack","seq":-1})"), SchemaError);
  EXPECT_THROW(decode(R"({"type":"ack","seq":1,"payload":3})"), SchemaError);
}

TEST(Service, HandshakeCarriesProtocolVersion) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  const auto out = svc.connect(1);
  ASSERT_EQ(out.size(), 3u);
  const auto hello = msg(out[0]);
  EXPECT_EQ(hello.type, "hello");
  EXPECT_EQ(hello.payload["protocol"], kProtocolVersion);
  EXPECT_EQ(msg(out[1]).type, "state");
  EXPECT_EQ(msg(out[2]).type, "belief");
  EXPECT_NEAR(msg(out[2]).payload["entropy"].get<double>(), std::log(6.0), 1e-12);

  const auto r = svc.receive(1, client_msg("hello", 1, {{"protocol", 99}}));
  EXPECT_EQ(msg(r[0]).payload["code"], "protocol_version");
}

TEST(Service, OutgoingSeqStrictlyIncreases) {
  SessionService svc(config(InputMode::Synthetic), model(), kWindow);
  std::vector<Outbound> all = svc.connect(1);
  svc.receive(1, client_msg("control", 1, {{"command", "start"}}));
  for (int i = 0; i < 40; ++i) {
    auto out = svc.tick();
    all.insert(all.end(), out.begin(), out.end());
  }
  std::uint64_t last = 0;
  for (const auto& o : all) {
    const auto s = msg(o).seq;
    EXPECT_GT(s, last);
    last = s;
  }
}

TEST(Service, SecondClientRejected) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  svc.connect(1);
  const auto out = svc.connect(2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].client, 2);
  EXPECT_TRUE(out[0].close);
  EXPECT_EQ(msg(out[0]).payload["code"], "busy");
  EXPECT_EQ(svc.client(), 1);
  // after the first leaves, the second may join
  svc.disconnect(1);
  EXPECT_EQ(msg(svc.connect(2)[0]).type, "hello");
}

TEST(Service, MalformedJsonKeepsConnection) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  svc.connect(1);
  auto out = svc.receive(1, "{oops");
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(msg(out[0]).type, "error");
  EXPECT_EQ(msg(out[0]).payload["code"], "malformed");
  EXPECT_FALSE(out[0].close);
  out = svc.receive(1, client_msg("control", 1, {{"command", "step"}}));
  EXPECT_EQ(msg(out[0]).type, "ack");
  EXPECT_EQ(msg(out[1]).type, "state");
}

TEST(Service, UnknownTypeAndSeqOrder) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  svc.connect(1);
  auto out = svc.receive(1, client_msg("teleport", 1));
  EXPECT_EQ(msg(out[0]).payload["code"], "unknown_type");
  EXPECT_EQ(msg(out[0]).payload["of"], 1);
  out = svc.receive(1, client_msg("control", 1, {{"command", "pause"}}));
  EXPECT_EQ(msg(out[0]).payload["code"], "bad_seq");
  out = svc.receive(1, client_msg("control", 5, {{"command", "pause"}}));
  EXPECT_EQ(msg(out[0]).type, "ack");
  out = svc.receive(1, client_msg("state", 6));
  EXPECT_EQ(msg(out[0]).payload["code"], "unexpected_type");
}

TEST(Service, GestureAppearsAtTranslatedFrame) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  svc.connect(1);
  svc.receive(1, client_msg("control", 1, {{"command", "step"}}));
  svc.receive(1, client_msg("control", 2, {{"command", "step"}}));
  const int frame = svc.session().frames_produced();
  const auto out = svc.receive(1, client_msg("gesture", 3, {{"kind", "Smile"}, {"client_ts", 12.5}}));
  ASSERT_EQ(out.size(), 1u);
  const auto ack = msg(out[0]);
  EXPECT_EQ(ack.type, "ack");
  EXPECT_EQ(ack.payload["of"], 3);
  EXPECT_EQ(ack.payload["onset_frame"], frame);
  EXPECT_EQ(ack.payload["client_ts"], 12.5);
  ASSERT_EQ(svc.session().record().gestures.size(), 1u);
  const auto& g = svc.session().record().gestures[0].gesture;
  EXPECT_EQ(g.kind, GestureKind::Smile);
  EXPECT_EQ(g.onset_frame, frame);

  EXPECT_EQ(msg(svc.receive(1, client_msg("gesture", 4, {{"kind", "Wink"}}))[0]).payload["code"], "bad_payload");
}

TEST(Service, GestureRejectedInExternalMode) {
  SessionService svc(config(InputMode::External), model(), kWindow);
  svc.connect(1);
  EXPECT_EQ(msg(svc.receive(1, client_msg("gesture", 1, {{"kind", "Smile"}}))[0]).payload["code"], "wrong_mode");
  json frames{{"values", json::array({std::vector<double>(kFrameWidth, 0.0), std::vector<double>(kFrameWidth, 1.0)})}};
  const auto ack = msg(svc.receive(1, client_msg("frames", 2, frames))[0]);
  EXPECT_EQ(ack.type, "ack");
  EXPECT_EQ(ack.payload["count"], 2);
  EXPECT_EQ(msg(svc.receive(1, client_msg("frames", 3, {{"values", {{1, 2}}}}))[0]).payload["code"], "bad_payload");
}

TEST(Service, ResetWithSeedMatchesFreshRun) {
  auto states = [](SessionService& svc, std::uint64_t first_seq) {
    std::vector<json> payloads;
    svc.receive(1, client_msg("control", first_seq, {{"command", "start"}}));
    for (int i = 0; i < 25; ++i)
      for (const auto& o : svc.tick())
        if (msg(o).type == "state") payloads.push_back(msg(o).payload);
    return payloads;
  };
  SessionService fresh(config(InputMode::Synthetic, 42), model(), kWindow);
  fresh.connect(1);
  const auto expected = states(fresh, 1);

  SessionService svc(config(InputMode::Synthetic, 7), model(), kWindow);
  svc.connect(1);
  states(svc, 1);
  const auto ack = svc.receive(1, client_msg("control", 2, {{"command", "reset"}, {"seed", 42}}));
  EXPECT_EQ(msg(ack[0]).payload["seed"], 42);
  EXPECT_FALSE(svc.running());
  EXPECT_EQ(states(svc, 3), expected);
}

TEST(Service, HeadlessFallback) {
  SessionService synthetic(config(InputMode::Synthetic), model(), kWindow);
  EXPECT_TRUE(synthetic.running());
  EXPECT_TRUE(synthetic.tick().empty());
  EXPECT_EQ(synthetic.session().state().tick, 1);

  SessionService live(config(InputMode::Live), model(), kWindow);
  EXPECT_FALSE(live.running());
  live.tick();
  EXPECT_EQ(live.session().state().tick, 0);
}

TEST(Service, EpisodeEndStopsClock) {
  auto c = config(InputMode::Synthetic);
  c.env.episode_length = 3;
  SessionService svc(c, model(), kWindow);
  for (int i = 0; i < 5; ++i) svc.tick();
  EXPECT_TRUE(svc.session().finished());
  EXPECT_FALSE(svc.running());
  svc.connect(1);
  EXPECT_EQ(msg(svc.receive(1, client_msg("gesture", 1, {{"kind", "Smile"}}))[0]).payload["code"], "finished");
}

TEST(Service, EveryMessageIsLogged) {
  SessionService svc(config(InputMode::Live), model(), kWindow);
  std::ostringstream os;
  svc.set_log_stream(&os);
  std::size_t sent = svc.connect(1).size();
  sent += svc.receive(1, "{bad").size();
  sent += svc.receive(1, client_msg("control", 1, {{"command", "step"}})).size();
  std::size_t in = 0, out = 0;
  for (const auto& l : svc.log()) (l.inbound ? in : out)++;
  EXPECT_EQ(in, 2u);
  EXPECT_EQ(out, sent);
  std::istringstream lines(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j["dir"] == "in" || j["dir"] == "out");
    ++n;
  }
  EXPECT_EQ(n, svc.log().size());
}

TEST(Service, BeliefAndMetricsFollowUpdates) {
  SessionService svc(config(InputMode::Synthetic, 11), model(), kWindow);
  svc.connect(1);
  svc.receive(1, client_msg("control", 1, {{"command", "start"}}));
  int beliefs = 0, metrics = 0;
  for (int i = 0; i < 40; ++i)
    for (const auto& o : svc.tick()) {
      const auto m = msg(o);
      beliefs += m.type == "belief";
      metrics += m.type == "metrics";
      if (m.type == "metrics") EXPECT_EQ(m.payload["cumulative_return"], svc.session().log().total_reward());
    }
  EXPECT_EQ(beliefs, static_cast<int>(svc.session().updates().size()));
  EXPECT_EQ(metrics, beliefs);
}
