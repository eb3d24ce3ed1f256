#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <thread>

#include "iotemu/camera.hpp"
#include "iotemu/cloud_servers.hpp"
#include "iotemu/controller.hpp"

using namespace iotemu;
using namespace iotemu::endpoint;
using cloud::CloudHarness;
using net::Addr;
using net::Millis;
using wire::WireMessage;

namespace {

Camera::Config camera_config(CloudHarness& h, const std::string& mac,
                             const std::string& password) {
    Camera::Config cfg;
    cfg.identity.mac = mac;
    cfg.identity.password = password;
    cfg.servers.registration_cmd = h.registration->cmd_addr();
    cfg.servers.registration_camera = h.registration->camera_addr();
    return cfg;
}

void wait_registered(Camera& cam) {
    for (int i = 0; i < 500 && !cam.registered_once(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    REQUIRE(cam.registered_once());
}

WireMessage image_request(const std::string& user, const std::string& pass) {
    WireMessage req = WireMessage::code(7010);
    req.add("url", kImageUrl).add("auth", wire::encode_auth(user, pass));
    return req;
}

}  // namespace

TEST_CASE("identity validation") {
    CameraIdentity id;
    id.mac = "74da38000001";
    id.password = "ok";
    CHECK_NOTHROW(id.validate());
    id.password = "";
    CHECK_THROWS_AS(id.validate(), std::invalid_argument);
    id.password = std::string(64, 'a');
    CHECK_THROWS_AS(id.validate(), std::invalid_argument);
    id.password = std::string(63, 'a');
    CHECK_NOTHROW(id.validate());
    id.mac = "74da3800000";  // 11 chars
    CHECK_THROWS_AS(id.validate(), std::invalid_argument);
    id.mac = "74da3800000g";
    CHECK_THROWS_AS(id.validate(), std::invalid_argument);
}

TEST_CASE("request handler routes on auth then url") {
    CameraIdentity id;
    id.mac = "74da38000001";
    id.password = "pw99";
    RequestContext ctx;

    auto ok = handle_request(id, image_request("admin", "pw99"), ctx);
    CHECK(ok.is_code(7020));
    CHECK(ok.get("status") == "ok");
    CHECK(wire::base64_decode(ok.get("image")) == image_fixture());

    auto bad = handle_request(id, image_request("admin", "pw98"), ctx);
    CHECK(bad.get("status") == "auth_failure");
    CHECK(!bad.find("image"));

    // Username is hardcoded; the right password under another name fails.
    auto wrong_user = handle_request(id, image_request("root", "pw99"), ctx);
    CHECK(wrong_user.get("status") == "auth_failure");

    WireMessage no_auth = WireMessage::code(7010);
    no_auth.add("url", kImageUrl);
    CHECK(handle_request(id, no_auth, ctx).get("status") == "malformed");
    WireMessage no_url = WireMessage::code(7010);
    no_url.add("auth", wire::encode_auth("admin", "pw99"));
    CHECK(handle_request(id, no_url, ctx).get("status") == "malformed");

    WireMessage junk_auth = WireMessage::code(7010);
    junk_auth.add("url", kImageUrl).add("auth", "%%%");
    CHECK(handle_request(id, junk_auth, ctx).get("status") == "auth_failure");

    WireMessage unknown = WireMessage::code(7010);
    unknown.add("url", "/nope").add("auth", wire::encode_auth("admin", "pw99"));
    CHECK(handle_request(id, unknown, ctx).get("status") == "not_found");

    CHECK(!ctx.telnet_started);
    WireMessage cgi = WireMessage::code(7010);
    cgi.add("url", kTelnetCgiUrl).add("auth", wire::encode_auth("admin", "pw99"));
    auto started = handle_request(id, cgi, ctx);
    CHECK(started.get("status") == "ok");
    CHECK(started.get("telnet") == "started");
    CHECK(ctx.telnet_started);
}

TEST_CASE("auth check is exhaustive over a small candidate space") {
    CameraIdentity id;
    id.mac = "74da38000001";
    id.password = "43";
    RequestContext ctx;
    int accepted = 0;
    for (int i = 0; i < 100; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%02d", i);
        auto resp = handle_request(id, image_request("admin", buf), ctx);
        if (resp.get("status") == "ok") {
            ++accepted;
            CHECK(std::string(buf) == "43");
        }
    }
    CHECK(accepted == 1);
}

TEST_CASE("camera re-registers on its timer") {
    auto h = CloudHarness::start();
    auto cfg = camera_config(h, "74da38000010", "1234");
    cfg.reregister_interval = Millis{2000};
    Camera cam(cfg, h.log);
    cam.start();
    std::this_thread::sleep_for(std::chrono::seconds(7));
    cam.stop();
    // At 2 s cadence a 7 s window must see at least 3 registrations.
    CHECK(cam.registration_count() >= 3);
    CHECK(h.log->count("device_online") >= 3);
    h.stop();
}

TEST_CASE("controller fetches the image end to end") {
    auto h = CloudHarness::start();
    Camera cam(camera_config(h, "74da38000011", "topsecret"), h.log);
    cam.start();
    wait_registered(cam);

    ControllerConfig ctl;
    ctl.target_mac = "74da38000011";
    ctl.password = "topsecret";
    ctl.registration_controller = h.registration->controller_addr();
    auto start = std::chrono::steady_clock::now();
    auto res = controller_fetch_image(ctl, h.log);
    auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(res.status == FetchStatus::Ok);
    CHECK(res.image == image_fixture());
    CHECK(elapsed < std::chrono::seconds(5));

    ctl.password = "wrong";
    auto bad = controller_fetch_image(ctl, h.log);
    CHECK(bad.status == FetchStatus::AuthFailure);

    ctl.target_mac = "74da38000012";  // never registered
    auto off = controller_fetch_image(ctl, h.log);
    CHECK(off.status == FetchStatus::CameraOffline);
    cam.stop();
    h.stop();
}

TEST_CASE("credentials ride on every request frame") {
    auto h = CloudHarness::start();
    Camera cam(camera_config(h, "74da38000013", "pw1"), h.log);
    cam.start();
    wait_registered(cam);

    ControllerConfig ctl;
    ctl.target_mac = "74da38000013";
    ctl.registration_controller = h.registration->controller_addr();
    ControllerSession session(ctl, h.log);
    REQUIRE(session.discover());
    session.open_relay();
    // Same session, alternating credentials: the camera re-checks each frame.
    auto ok1 = session.request(kImageUrl, "admin", "pw1");
    CHECK(ok1.status == FetchStatus::Ok);
    auto bad = session.request(kImageUrl, "admin", "nope");
    CHECK(bad.status == FetchStatus::AuthFailure);
    auto ok2 = session.request(kImageUrl, "admin", "pw1");
    CHECK(ok2.status == FetchStatus::Ok);
    session.close();
    cam.stop();
    h.stop();
}

TEST_CASE("telnet backdoor starts via the CGI url and takes fixed credentials") {
    auto h = CloudHarness::start();
    Camera cam(camera_config(h, "74da38000014", "camerapw"), h.log);
    cam.start();
    wait_registered(cam);
    CHECK(!cam.telnet_started());

    ControllerConfig ctl;
    ctl.target_mac = "74da38000014";
    ctl.registration_controller = h.registration->controller_addr();
    ControllerSession session(ctl, h.log);
    REQUIRE(session.discover());
    session.open_relay();
    auto res = session.request(kTelnetCgiUrl, "admin", "camerapw");
    REQUIRE(res.status == FetchStatus::Ok);
    session.close();

    for (int i = 0; i < 100 && !cam.telnet_started(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    REQUIRE(cam.telnet_started());
    auto addr = cam.telnet_addr();
    REQUIRE(addr);

    auto read_until = [](net::TcpSocket& s, const std::string& token) {
        std::string buf;
        for (int i = 0; i < 100; ++i) {
            auto chunk = s.recv_some(256, Millis{100});
            if (chunk && !chunk->empty()) buf += *chunk;
            if (buf.find(token) != std::string::npos) return true;
        }
        return false;
    };

    // The telnet login is admin/1234 regardless of the camera password.
    auto shell = net::TcpSocket::connect(*addr, Millis{2000});
    REQUIRE(read_until(shell, "login:"));
    shell.send_all("admin\n");
    REQUIRE(read_until(shell, "Password:"));
    shell.send_all("1234\n");
    CHECK(read_until(shell, "Welcome"));
    shell.send_all("echo hi\n");
    CHECK(read_until(shell, "echo hi"));
    shell.shutdown();

    auto denied = net::TcpSocket::connect(*addr, Millis{2000});
    REQUIRE(read_until(denied, "login:"));
    denied.send_all("admin\n");
    REQUIRE(read_until(denied, "Password:"));
    denied.send_all("camerapw\n");
    CHECK(read_until(denied, "Login incorrect"));
    denied.shutdown();

    cam.stop();
    h.stop();
}
