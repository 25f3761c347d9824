import { createApp } from "./ui.js";

const root = document.getElementById("app");
if (root) {
  createApp(root, (input, init) => fetch(input, init));
}
