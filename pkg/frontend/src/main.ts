import { mount } from './app.js'

// Same-origin by default (service mounts the UI at /ui); override with
// ?api=http://host:port when developing against a separate server.
const params = new URLSearchParams(window.location.search)
const base = params.get('api') ?? ''
mount(document, base)
