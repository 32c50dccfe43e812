chrome.runtime.onMessage.addListener(function (req, sender, reply) {
  reply({ok: true});
});
chrome.runtime.onConnect.addListener(function (port) {});
