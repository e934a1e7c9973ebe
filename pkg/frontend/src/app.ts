// Browser bootstrap: wire the live transport, controller, and renderer.

import { ConsoleController, liveTransport } from "./client";
import { render, type Handlers } from "./render";
import { clearToast, withToast } from "./viewmodel";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app element");

const controller = new ConsoleController(liveTransport(""), (vm) => render(root, vm, handlers));

const handlers: Handlers = {
  onSelectPersona: (personaId) => void controller.selectPersona(personaId),
  onAcknowledge: (actionId) => void controller.acknowledge(actionId),
  onFail: (actionId) => void controller.fail(actionId),
  onDismissToast: () => {
    controller.vm = clearToast(controller.vm);
    render(root, controller.vm, handlers);
  },
};

controller.connect().catch((err) => {
  controller.vm = withToast(controller.vm, `service unreachable: ${String(err)}`);
  render(root, controller.vm, handlers);
});
